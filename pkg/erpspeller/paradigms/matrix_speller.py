"""
Matrix speller paradigm (MS-P): a 6 x 7 grid centred on the display with the
feedback line on the left side.
"""

PARADIGM_ID = "MS_P"
FEEDBACK_REGION = "LEFT_SIDE"
N_ROWS = 6
N_COLS = 7


def cell_offsets():
    """Grid cells in row-major item order.

    Returns:
        list: (grid_row, grid_col, ux, uy) tuples, with ux/uy in pitch units
        from the matrix centre (uy positive upwards)
    """
    cells = []
    for row in range(N_ROWS):
        for col in range(N_COLS):
            ux = col - (N_COLS - 1) / 2
            uy = (N_ROWS - 1) / 2 - row
            cells.append((row, col, ux, uy))
    return cells
