#include "subnet/plot.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "subnet/util.hpp"

namespace subnet::plot {

namespace {

// Column-major 5x7 glyphs for ASCII 0x20..0x5F, bit 0 = top row.
constexpr uint8_t kFont[][5] = {
    {0x00, 0x00, 0x00, 0x00, 0x00},  // space
    {0x00, 0x00, 0x5F, 0x00, 0x00},  // !
    {0x00, 0x07, 0x00, 0x07, 0x00},  // "
    {0x14, 0x7F, 0x14, 0x7F, 0x14},  // #
    {0x24, 0x2A, 0x7F, 0x2A, 0x12},  // $
    {0x23, 0x13, 0x08, 0x64, 0x62},  // %
    {0x36, 0x49, 0x55, 0x22, 0x50},  // &
    {0x00, 0x05, 0x03, 0x00, 0x00},  // '
    {0x00, 0x1C, 0x22, 0x41, 0x00},  // (
    {0x00, 0x41, 0x22, 0x1C, 0x00},  // )
    {0x08, 0x2A, 0x1C, 0x2A, 0x08},  // *
    {0x08, 0x08, 0x3E, 0x08, 0x08},  // +
    {0x00, 0x50, 0x30, 0x00, 0x00},  // ,
    {0x08, 0x08, 0x08, 0x08, 0x08},  // -
    {0x00, 0x60, 0x60, 0x00, 0x00},  // .
    {0x20, 0x10, 0x08, 0x04, 0x02},  // /
    {0x3E, 0x51, 0x49, 0x45, 0x3E},  // 0
    {0x00, 0x42, 0x7F, 0x40, 0x00},  // 1
    {0x42, 0x61, 0x51, 0x49, 0x46},  // 2
    {0x21, 0x41, 0x45, 0x4B, 0x31},  // 3
    {0x18, 0x14, 0x12, 0x7F, 0x10},  // 4
    {0x27, 0x45, 0x45, 0x45, 0x39},  // 5
    {0x3C, 0x4A, 0x49, 0x49, 0x30},  // 6
    {0x01, 0x71, 0x09, 0x05, 0x03},  // 7
    {0x36, 0x49, 0x49, 0x49, 0x36},  // 8
    {0x06, 0x49, 0x49, 0x29, 0x1E},  // 9
    {0x00, 0x36, 0x36, 0x00, 0x00},  // :
    {0x00, 0x56, 0x36, 0x00, 0x00},  // ;
    {0x00, 0x08, 0x14, 0x22, 0x41},  // <
    {0x14, 0x14, 0x14, 0x14, 0x14},  // =
    {0x41, 0x22, 0x14, 0x08, 0x00},  // >
    {0x02, 0x01, 0x51, 0x09, 0x06},  // ?
    {0x32, 0x49, 0x79, 0x41, 0x3E},  // @
    {0x7E, 0x11, 0x11, 0x11, 0x7E},  // A
    {0x7F, 0x49, 0x49, 0x49, 0x36},  // B
    {0x3E, 0x41, 0x41, 0x41, 0x22},  // C
    {0x7F, 0x41, 0x41, 0x22, 0x1C},  // D
    {0x7F, 0x49, 0x49, 0x49, 0x41},  // E
    {0x7F, 0x09, 0x09, 0x09, 0x01},  // F
    {0x3E, 0x41, 0x49, 0x49, 0x7A},  // G
    {0x7F, 0x08, 0x08, 0x08, 0x7F},  // H
    {0x00, 0x41, 0x7F, 0x41, 0x00},  // I
    {0x20, 0x40, 0x41, 0x3F, 0x01},  // J
    {0x7F, 0x08, 0x14, 0x22, 0x41},  // K
    {0x7F, 0x40, 0x40, 0x40, 0x40},  // L
    {0x7F, 0x02, 0x0C, 0x02, 0x7F},  // M
    {0x7F, 0x04, 0x08, 0x10, 0x7F},  // N
    {0x3E, 0x41, 0x41, 0x41, 0x3E},  // O
    {0x7F, 0x09, 0x09, 0x09, 0x06},  // P
    {0x3E, 0x41, 0x51, 0x21, 0x5E},  // Q
    {0x7F, 0x09, 0x19, 0x29, 0x46},  // R
    {0x46, 0x49, 0x49, 0x49, 0x31},  // S
    {0x01, 0x01, 0x7F, 0x01, 0x01},  // T
    {0x3F, 0x40, 0x40, 0x40, 0x3F},  // U
    {0x1F, 0x20, 0x40, 0x20, 0x1F},  // V
    {0x7F, 0x20, 0x18, 0x20, 0x7F},  // W
    {0x63, 0x14, 0x08, 0x14, 0x63},  // X
    {0x03, 0x04, 0x78, 0x04, 0x03},  // Y
    {0x61, 0x51, 0x49, 0x45, 0x43},  // Z
    {0x00, 0x7F, 0x41, 0x41, 0x00},  // [
    {0x02, 0x04, 0x08, 0x10, 0x20},  // backslash
    {0x00, 0x41, 0x41, 0x7F, 0x00},  // ]
    {0x04, 0x02, 0x01, 0x02, 0x04},  // ^
    {0x40, 0x40, 0x40, 0x40, 0x40},  // _
};

const uint8_t* glyph(char ch) {
    unsigned c = static_cast<unsigned char>(ch);
    if (c >= 'a' && c <= 'z') c -= 32;
    if (c < 0x20 || c > 0x5F) c = '?';
    return kFont[c - 0x20];
}

void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_u32be(out, static_cast<uint32_t>(data.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32be(out, static_cast<uint32_t>(crc));
}

std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

struct AxisScale {
    double lo, hi;
    int px0, px1;  // pixel range; for y, px0 is the bottom
    int to_px(double v) const {
        double t = (hi > lo) ? (v - lo) / (hi - lo) : 0.5;
        return px0 + static_cast<int>(std::lround(t * (px1 - px0)));
    }
};

std::vector<double> nice_ticks(double lo, double hi, int target) {
    if (!(hi > lo)) return {lo};
    double raw = (hi - lo) / target;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (mag * m >= raw) {
            step = mag * m;
            break;
        }
    }
    std::vector<double> t;
    double v = std::ceil(lo / step) * step;
    for (; v <= hi + step * 1e-9; v += step) t.push_back(std::abs(v) < step * 1e-9 ? 0.0 : v);
    return t;
}

Color heat_color(double t) {
    // dark blue -> cyan -> yellow -> red gradient
    static const Color stops[] = {{20, 20, 90}, {30, 140, 200}, {120, 200, 120}, {240, 220, 60}, {200, 40, 30}};
    t = std::clamp(t, 0.0, 1.0) * 3.999;
    int i = static_cast<int>(t);
    double f = t - i;
    Color a = stops[i], b = stops[i + 1];
    return {static_cast<uint8_t>(a[0] + f * (b[0] - a[0])), static_cast<uint8_t>(a[1] + f * (b[1] - a[1])),
            static_cast<uint8_t>(a[2] + f * (b[2] - a[2]))};
}

constexpr Color kBlack{0, 0, 0};
constexpr Color kGrid{225, 225, 225};

}  // namespace

Color palette(int i) {
    static const Color p[] = {{31, 119, 180}, {255, 127, 14},  {44, 160, 44},  {214, 39, 40},
                              {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {90, 90, 90}};
    return p[((i % 8) + 8) % 8];
}

Image::Image(int width, int height, Color fill) : w(width), h(height), rgb(static_cast<size_t>(width) * height * 3) {
    for (size_t i = 0; i < rgb.size(); i += 3) {
        rgb[i] = fill[0];
        rgb[i + 1] = fill[1];
        rgb[i + 2] = fill[2];
    }
}

void Image::set(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    size_t i = (static_cast<size_t>(y) * w + x) * 3;
    rgb[i] = c[0];
    rgb[i + 1] = c[1];
    rgb[i + 2] = c[2];
}

void Image::fill_rect(int x0, int y0, int x1, int y1, Color c) {
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) set(x, y, c);
}

void Image::line(int x0, int y0, int x1, int y1, Color c) {
    int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
        set(x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void Image::text(int x, int y, const std::string& s, Color c, int scale) {
    for (char ch : s) {
        const uint8_t* g = glyph(ch);
        for (int col = 0; col < 5; ++col)
            for (int row = 0; row < 7; ++row)
                if (g[col] >> row & 1) fill_rect(x + col * scale, y + row * scale, x + col * scale + scale - 1, y + row * scale + scale - 1, c);
        x += 6 * scale;
    }
}

int Image::text_width(const std::string& s, int scale) { return static_cast<int>(s.size()) * 6 * scale - (s.empty() ? 0 : scale); }

std::vector<uint8_t> encode_png(const Image& img) {
    std::vector<uint8_t> out;
    const uint8_t sig[] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);

    std::vector<uint8_t> ihdr;
    put_u32be(ihdr, static_cast<uint32_t>(img.w));
    put_u32be(ihdr, static_cast<uint32_t>(img.h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);

    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.h) * (1 + static_cast<size_t>(img.w) * 3));
    for (int y = 0; y < img.h; ++y) {
        raw.push_back(0);  // filter: none
        const uint8_t* row = img.rgb.data() + static_cast<size_t>(y) * img.w * 3;
        raw.insert(raw.end(), row, row + static_cast<size_t>(img.w) * 3);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> idat(bound);
    if (compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw RunAbort("png deflate failed");
    idat.resize(bound);
    put_chunk(out, "IDAT", idat);
    put_chunk(out, "IEND", {});
    return out;
}

void write_png(const std::string& path, const Image& img) {
    auto bytes = encode_png(img);
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw RunAbort("cannot write " + path);
}

Image render_chart(const std::vector<Series>& series, const ChartSpec& spec) {
    Image img(spec.width, spec.height);
    const int ml = 70, mr = 20, mt = 34, mb = 46;

    double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
    bool any = false;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            double lo = i < s.ylo.size() ? s.ylo[i] : s.y[i];
            double hi = i < s.yhi.size() ? s.yhi[i] : s.y[i];
            if (!any) {
                xlo = xhi = s.x[i];
                ylo = lo;
                yhi = hi;
                any = true;
            } else {
                xlo = std::min(xlo, s.x[i]);
                xhi = std::max(xhi, s.x[i]);
                ylo = std::min(ylo, lo);
                yhi = std::max(yhi, hi);
            }
        }
    if (spec.ymin) ylo = *spec.ymin;
    if (spec.ymax) yhi = *spec.ymax;
    if (xhi <= xlo) xhi = xlo + 1;
    if (yhi <= ylo) yhi = ylo + 1;
    double xpad = 0.04 * (xhi - xlo), ypad = 0.06 * (yhi - ylo);
    AxisScale ax{xlo - xpad, xhi + xpad, ml, spec.width - mr};
    AxisScale ay{spec.ymin ? ylo : ylo - ypad, spec.ymax ? yhi : yhi + ypad, spec.height - mb, mt};

    for (double t : nice_ticks(ax.lo, ax.hi, 6)) {
        int px = ax.to_px(t);
        img.line(px, mt, px, spec.height - mb, kGrid);
        std::string lbl = fmt_num(t);
        img.text(px - Image::text_width(lbl) / 2, spec.height - mb + 6, lbl, kBlack);
    }
    for (double t : nice_ticks(ay.lo, ay.hi, 6)) {
        int py = ay.to_px(t);
        img.line(ml, py, spec.width - mr, py, kGrid);
        std::string lbl = fmt_num(t);
        img.text(ml - 6 - Image::text_width(lbl), py - 3, lbl, kBlack);
    }
    img.line(ml, mt, ml, spec.height - mb, kBlack);
    img.line(ml, spec.height - mb, spec.width - mr, spec.height - mb, kBlack);

    for (const auto& s : series) {
        std::vector<size_t> order(s.x.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return s.x[a] < s.x[b]; });
        int prevx = 0, prevy = 0;
        bool started = false;
        for (size_t k : order) {
            int px = ax.to_px(s.x[k]), py = ay.to_px(s.y[k]);
            if (k < s.ylo.size() && k < s.yhi.size()) {
                int plo = ay.to_px(s.ylo[k]), phi = ay.to_px(s.yhi[k]);
                img.line(px, plo, px, phi, s.color);
                img.line(px - 3, plo, px + 3, plo, s.color);
                img.line(px - 3, phi, px + 3, phi, s.color);
            }
            if (s.scatter) {
                img.fill_rect(px - 2, py - 2, px + 2, py + 2, s.color);
            } else {
                if (started) img.line(prevx, prevy, px, py, s.color);
                img.fill_rect(px - 1, py - 1, px + 1, py + 1, s.color);
                prevx = px;
                prevy = py;
                started = true;
            }
        }
    }

    int ly = mt + 6;
    for (const auto& s : series) {
        if (s.label.empty()) continue;
        int lw = Image::text_width(s.label) + 18;
        int lx = spec.width - mr - 8 - lw;
        img.fill_rect(lx, ly, lx + 10, ly + 6, s.color);
        img.text(lx + 14, ly, s.label, kBlack);
        ly += 12;
    }

    img.text((spec.width - Image::text_width(spec.title, 2)) / 2, 8, spec.title, kBlack, 2);
    img.text((spec.width - Image::text_width(spec.xlabel)) / 2, spec.height - 14, spec.xlabel, kBlack);
    img.text(6, mt - 14, spec.ylabel, kBlack);
    return img;
}

Image render_heatmap(const Eigen::MatrixXd& values, const HeatSpec& spec) {
    const int rows = static_cast<int>(values.rows());
    const int cols = static_cast<int>(values.cols());
    const int cw = std::clamp(960 / std::max(cols, 1), 3, 24);
    const int ch = std::clamp(320 / std::max(rows, 1), 10, 36);
    const int ml = 58, mt = 34, mb = 42;
    const int mr = spec.legend.empty() ? 20 : 120;
    Image img(ml + cols * cw + mr, mt + rows * ch + mb);

    double span = spec.vmax - spec.vmin;
    if (span <= 0) span = 1;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            Color col;
            if (spec.discrete) {
                col = palette(static_cast<int>(std::lround(values(r, c))));
                if (values(r, c) < spec.vmin) col = {235, 235, 235};
            } else {
                col = heat_color((values(r, c) - spec.vmin) / span);
            }
            img.fill_rect(ml + c * cw, mt + r * ch, ml + (c + 1) * cw - 1, mt + (r + 1) * ch - 1, col);
        }
    for (int r = 0; r < rows; ++r) {
        std::string lbl = r < static_cast<int>(spec.row_labels.size()) ? spec.row_labels[r] : "A" + std::to_string(r);
        img.text(ml - 6 - Image::text_width(lbl), mt + r * ch + ch / 2 - 3, lbl, kBlack);
    }
    int step = std::max(1, cols / 8);
    for (int c = 0; c < cols; c += step) {
        std::string lbl = std::to_string(c);
        img.text(ml + c * cw + cw / 2 - Image::text_width(lbl) / 2, mt + rows * ch + 6, lbl, kBlack);
    }
    for (size_t i = 0; i < spec.legend.size(); ++i) {
        int lx = ml + cols * cw + 12, lyy = mt + static_cast<int>(i) * 14;
        img.fill_rect(lx, lyy, lx + 10, lyy + 8, palette(static_cast<int>(i)));
        img.text(lx + 14, lyy, spec.legend[i], kBlack);
    }
    img.text((img.w - Image::text_width(spec.title, 2)) / 2, 8, spec.title, kBlack, 2);
    img.text((img.w - Image::text_width(spec.xlabel)) / 2, img.h - 14, spec.xlabel, kBlack);
    img.text(6, mt - 14, spec.ylabel, kBlack);
    return img;
}

}  // namespace subnet::plot
