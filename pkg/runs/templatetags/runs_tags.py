from django import template

register = template.Library()


@register.filter(name='short_digest')
def short_digest(digest, length=12):
    """
    Shorten a hex digest for display
    :param digest: hex string
    :param length: number of leading characters to keep
    :return: leading characters followed by an ellipsis, or '' for an empty digest
    """
    if not digest:
        return ''
    length = int(length)
    return digest if len(digest) <= length else '{0}…'.format(digest[:length])
