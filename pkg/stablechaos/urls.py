"""
URL configuration for stablechaos project.

Only the admin site is routed; it is used to browse the experiment run ledger.
"""

from django.contrib import admin
from django.urls import path

urlpatterns = [
    path("admin/", admin.site.urls),
]
