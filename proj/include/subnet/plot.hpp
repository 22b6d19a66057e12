#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace subnet::plot {

using Color = std::array<uint8_t, 3>;

struct Image {
    int w = 0, h = 0;
    std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

    Image(int width, int height, Color fill = {255, 255, 255});
    void set(int x, int y, Color c);
    void fill_rect(int x0, int y0, int x1, int y1, Color c);
    void line(int x0, int y0, int x1, int y1, Color c);
    // 5x7 bitmap font, integer scale; lowercase maps onto the uppercase set.
    void text(int x, int y, const std::string& s, Color c, int scale = 1);
    static int text_width(const std::string& s, int scale = 1);
};

// Deterministic PNG bytes (8-bit RGB, single zlib-compressed IDAT, no
// timestamp chunks), so identical pixels give identical files.
std::vector<uint8_t> encode_png(const Image& img);
void write_png(const std::string& path, const Image& img);

struct Series {
    std::string label;
    std::vector<double> x, y;
    Color color{0, 0, 0};
    bool scatter = false;          // points only, no connecting line
    std::vector<double> ylo, yhi;  // optional per-point interval whiskers
};

struct ChartSpec {
    std::string title, xlabel, ylabel;
    int width = 800, height = 500;
    std::optional<double> ymin, ymax;
};

Image render_chart(const std::vector<Series>& series, const ChartSpec& spec);

struct HeatSpec {
    std::string title, xlabel, ylabel;
    double vmin = 0.0, vmax = 1.0;
    bool discrete = false;  // integer-valued cells, categorical palette
    std::vector<std::string> row_labels;
    std::vector<std::string> legend;  // one entry per discrete value
};

Image render_heatmap(const Eigen::MatrixXd& values, const HeatSpec& spec);

// Stable palette used across every chart so a variant keeps its color.
Color palette(int i);

}  // namespace subnet::plot
