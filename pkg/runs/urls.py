from django.urls import path

from .views import ManifestDetailView, ManifestListView

urlpatterns = [
    path('', ManifestListView.as_view(), name='home'),
    path('runs/<int:pk>/', ManifestDetailView.as_view(), name='manifest_detail'),
]
