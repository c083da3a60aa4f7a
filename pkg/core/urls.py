"""
URL configuration for core project.

Only the admin is served; it browses the experiment run ledger.
"""

from django.contrib import admin
from django.urls import path

urlpatterns = [
    path("admin/", admin.site.urls),
]
