from .vtk_writer import state_fields, write_state_vtk, write_vtk
from .csv_writer import write_observables_csv, write_report_csv
