from primitives.exceptions import InputError


class ConfigParse(InputError):
    """
    Scenario config that cannot be parsed or validated.
    :param field: offending key, as section.key
    :param line: 1-based line of the key in the config file, or None
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(field)
        if line:
            where.append('line {0}'.format(line))
        super().__init__('{0}: {1}'.format(', '.join(where), message) if where else message)


class IoFailure(InputError):
    pass


class SchemaViolation(InputError):
    """
    Panel CSV that does not match the schema.
    :param row: 1-based data row (header excluded), or None for file-level problems
    :param column: offending column, or None
    """

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append('row {0}'.format(row))
        if column is not None:
            where.append("column '{0}'".format(column))
        super().__init__('{0}: {1}'.format(', '.join(where), message) if where else message)


class UnknownScenario(InputError):
    pass
