"""
Large visual angle speller paradigm (LS-P): an 8 x 7 grid whose two central
rows are left blank for feedback, pushing every item away from the fovea.
"""

PARADIGM_ID = "LS_P"
FEEDBACK_REGION = "CENTER"
N_ROWS = 8
N_COLS = 7
FEEDBACK_ROWS = (3, 4)


def cell_offsets():
    """Grid cells in row-major item order, skipping the feedback band.

    Returns:
        list: (grid_row, grid_col, ux, uy) tuples, with ux/uy in pitch units
        from the display centre (uy positive upwards)
    """
    cells = []
    for row in range(N_ROWS):
        if row in FEEDBACK_ROWS:
            continue
        for col in range(N_COLS):
            ux = col - (N_COLS - 1) / 2
            uy = (N_ROWS - 1) / 2 - row
            cells.append((row, col, ux, uy))
    return cells
