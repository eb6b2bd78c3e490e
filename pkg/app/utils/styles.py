import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from reportlab.lib import colors  # noqa: E402


class AppStyles:
    # Paleta sobria compartida por gráficos y reportes
    PRIMARY_COLOR = "#2c3e50"  # Azul oscuro
    BACKGROUND_COLOR = "#f5f5f5"  # Gris muy claro
    TEXT_COLOR = "#333333"  # Casi negro
    LIGHT_TEXT_COLOR = "#ffffff"  # Blanco
    SERIES_COLORS = ["#3498db", "#e74c3c", "#2ecc71", "#f39c12", "#9b59b6", "#34495e", "#95a5a6"]

    # Fuentes
    TITLE_FONT = ("DejaVu Sans", 14)
    NORMAL_FONT = ("DejaVu Sans", 10)
    PDF_HEADER_FONT = "Helvetica-Bold"

    CHART_DPI = 300

    @staticmethod
    def series_color(index):
        return AppStyles.SERIES_COLORS[index % len(AppStyles.SERIES_COLORS)]

    @staticmethod
    def apply_chart_style():
        """Configura matplotlib con la paleta de la aplicación"""
        plt.rcParams.update({
            "font.family": AppStyles.NORMAL_FONT[0],
            "font.size": AppStyles.NORMAL_FONT[1],
            "axes.titlesize": AppStyles.TITLE_FONT[1],
            "axes.edgecolor": AppStyles.PRIMARY_COLOR,
            "axes.labelcolor": AppStyles.TEXT_COLOR,
            "axes.facecolor": AppStyles.LIGHT_TEXT_COLOR,
            "figure.facecolor": AppStyles.LIGHT_TEXT_COLOR,
            "xtick.color": AppStyles.TEXT_COLOR,
            "ytick.color": AppStyles.TEXT_COLOR,
            "grid.alpha": 0.3,
        })

    @staticmethod
    def get_table_style():
        """Comandos de TableStyle: encabezado oscuro, filas alternas, grilla"""
        return [
            ("BACKGROUND", (0, 0), (-1, 0), colors.HexColor(AppStyles.PRIMARY_COLOR)),
            ("TEXTCOLOR", (0, 0), (-1, 0), colors.HexColor(AppStyles.LIGHT_TEXT_COLOR)),
            ("ALIGN", (0, 0), (-1, -1), "CENTER"),
            ("FONTNAME", (0, 0), (-1, 0), AppStyles.PDF_HEADER_FONT),
            ("FONTSIZE", (0, 0), (-1, -1), 8),
            ("BOTTOMPADDING", (0, 0), (-1, 0), 8),
            ("ROWBACKGROUNDS", (0, 1), (-1, -1),
             [colors.white, colors.HexColor(AppStyles.BACKGROUND_COLOR)]),
            ("GRID", (0, 0), (-1, -1), 0.5, colors.HexColor(AppStyles.TEXT_COLOR)),
        ]
