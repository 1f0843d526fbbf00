import json

from django.views.generic import DetailView, ListView

from runs.models import RunManifest


class ManifestListView(ListView):
    """
    Views for Home, which lists every recorded run, newest first.
    """
    template_name = 'runs/manifest_list.html'
    model = RunManifest
    paginate_by = 50
    extra_context = dict()

    def get_context_data(self, *, object_list=None, **kwargs):
        context = super().get_context_data(**kwargs)
        context['menu_page'] = 'runs'  # variable to indicate which page the user is in

        return context


class ManifestDetailView(DetailView):
    """
    Views for one Run Manifest.
    """
    template_name = 'runs/manifest_detail.html'
    model = RunManifest
    context_object_name = 'manifest'

    def get_context_data(self, **kwargs):
        context = super().get_context_data(**kwargs)
        # JSON fields are rendered pre-formatted
        context['config_json'] = json.dumps(self.object.config, indent=2, sort_keys=True)
        context['versions_json'] = json.dumps(self.object.module_versions, indent=2, sort_keys=True)
        context['outputs'] = sorted(self.object.output_digests.items())
        context['menu_page'] = 'run'

        return context
