#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fusionlab/errors.hpp"
#include "fusionlab/harness.hpp"

namespace fusionlab {

namespace {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    out.push_back(field);
    return out;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty file: " + path);
    table.header = split_fields(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        table.rows.push_back(split_fields(line));
    }
    return table;
}

std::size_t column_index(const CsvTable& table, const std::string& name, const std::string& path) {
    for (std::size_t i = 0; i < table.header.size(); ++i)
        if (table.header[i] == name) return i;
    throw ConfigError(path + " has no '" + name + "' column");
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << content;
    if (!out) throw IoError("failed writing " + path);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// all curves land in one frame, so the label has to tell runs apart; per-run
// metrics files share a basename, so fall back to the directory name
std::string series_label(const std::string& path) {
    const std::filesystem::path p(path);
    std::string stem = p.stem().string();
    if (stem == "metrics" && p.has_parent_path()) {
        const std::string parent = p.parent_path().filename().string();
        if (!parent.empty()) return parent;
    }
    return stem;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b"};
constexpr std::size_t kPaletteSize = sizeof kPalette / sizeof kPalette[0];
constexpr char kMarks[] = "*+ox#@";

struct Frame {
    double x0, x1, y0, y1;  // data ranges
    double px0, px1, py0, py1;  // pixel box, py0 is the top edge

    double sx(double x) const { return px0 + (x - x0) / (x1 - x0) * (px1 - px0); }
    double sy(double y) const { return py1 - (y - y0) / (y1 - y0) * (py1 - py0); }
};

void pad_degenerate(double& lo, double& hi) {
    if (lo == hi) {
        const double pad = (lo == 0.0) ? 1.0 : std::abs(lo) * 0.05;
        lo -= pad;
        hi += pad;
    }
}

std::string svg_open(double width, double height) {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
        << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"#ffffff\"/>\n";
    return out.str();
}

std::string svg_axes(const Frame& f, const std::string& x_name, const std::string& y_name) {
    std::ostringstream out;
    out << "<rect x=\"" << fmt("%.1f", f.px0) << "\" y=\"" << fmt("%.1f", f.py0) << "\" width=\""
        << fmt("%.1f", f.px1 - f.px0) << "\" height=\"" << fmt("%.1f", f.py1 - f.py0)
        << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double tx = f.x0 + (f.x1 - f.x0) * i / 4.0;
        const double ty = f.y0 + (f.y1 - f.y0) * i / 4.0;
        out << "<text x=\"" << fmt("%.1f", f.sx(tx)) << "\" y=\"" << fmt("%.1f", f.py1 + 16)
            << "\" font-family=\"monospace\" font-size=\"11\" fill=\"#333333\" "
               "text-anchor=\"middle\">"
            << fmt("%.4g", tx) << "</text>\n";
        out << "<text x=\"" << fmt("%.1f", f.px0 - 6) << "\" y=\"" << fmt("%.1f", f.sy(ty) + 4)
            << "\" font-family=\"monospace\" font-size=\"11\" fill=\"#333333\" "
               "text-anchor=\"end\">"
            << fmt("%.4g", ty) << "</text>\n";
    }
    out << "<text x=\"" << fmt("%.1f", (f.px0 + f.px1) / 2) << "\" y=\"" << fmt("%.1f", f.py1 + 34)
        << "\" font-family=\"monospace\" font-size=\"12\" fill=\"#333333\" "
           "text-anchor=\"middle\">"
        << x_name << "</text>\n";
    out << "<text x=\"14\" y=\"" << fmt("%.1f", (f.py0 + f.py1) / 2)
        << "\" font-family=\"monospace\" font-size=\"12\" fill=\"#333333\" text-anchor=\"middle\" "
           "transform=\"rotate(-90 14 "
        << fmt("%.1f", (f.py0 + f.py1) / 2) << ")\">" << y_name << "</text>\n";
    return out.str();
}

std::string render_text_chart(const std::vector<Series>& series, const Frame& f,
                              const std::string& x_name, const std::string& y_name) {
    constexpr std::size_t kW = 64;
    constexpr std::size_t kH = 16;
    std::vector<std::string> grid(kH, std::string(kW, ' '));
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char mark = kMarks[s % (sizeof kMarks - 1)];
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            const double fx = (series[s].x[i] - f.x0) / (f.x1 - f.x0);
            const double fy = (series[s].y[i] - f.y0) / (f.y1 - f.y0);
            if (fx < 0.0 || fx > 1.0 || fy < 0.0 || fy > 1.0) continue;
            const std::size_t cx = std::min(kW - 1, static_cast<std::size_t>(fx * (kW - 1) + 0.5));
            const std::size_t cy =
                kH - 1 - std::min(kH - 1, static_cast<std::size_t>(fy * (kH - 1) + 0.5));
            grid[cy][cx] = mark;
        }
    }
    std::ostringstream out;
    out << y_name << " [" << fmt("%.4g", f.y0) << ", " << fmt("%.4g", f.y1) << "]\n";
    for (const std::string& row : grid) out << "|" << row << "\n";
    out << "+" << std::string(kW, '-') << "\n";
    out << x_name << " [" << fmt("%.4g", f.x0) << ", " << fmt("%.4g", f.x1) << "]\n";
    for (std::size_t s = 0; s < series.size(); ++s)
        out << kMarks[s % (sizeof kMarks - 1)] << " " << series[s].label << "\n";
    return out.str();
}

}  // namespace

void emit_loss_plot(const std::vector<std::string>& metrics_csvs, const std::string& out_base) {
    if (metrics_csvs.empty()) throw ConfigError("loss plot needs at least one metrics file");
    std::vector<Series> series;
    for (const std::string& path : metrics_csvs) {
        const CsvTable table = read_csv(path);
        const std::size_t step_col = column_index(table, "step", path);
        const std::size_t loss_col = column_index(table, "loss", path);
        Series s;
        s.label = series_label(path);
        for (const std::vector<std::string>& row : table.rows) {
            if (row.size() <= std::max(step_col, loss_col)) continue;
            if (row[step_col].empty() || row[loss_col].empty()) continue;
            s.x.push_back(std::stod(row[step_col]));
            s.y.push_back(std::stod(row[loss_col]));
        }
        if (s.x.empty()) throw ConfigError("no data rows to plot in " + path);
        series.push_back(std::move(s));
    }

    Frame f;
    f.x0 = series[0].x.front();
    f.x1 = f.x0;
    f.y0 = series[0].y.front();
    f.y1 = f.y0;
    for (const Series& s : series) {
        for (double x : s.x) {
            f.x0 = std::min(f.x0, x);
            f.x1 = std::max(f.x1, x);
        }
        for (double y : s.y) {
            f.y0 = std::min(f.y0, y);
            f.y1 = std::max(f.y1, y);
        }
    }
    pad_degenerate(f.x0, f.x1);
    pad_degenerate(f.y0, f.y1);
    f.px0 = 64;
    f.px1 = 704;
    f.py0 = 18;
    f.py1 = 396;

    std::ostringstream svg;
    svg << svg_open(720, 440);
    svg << svg_axes(f, "step", "loss");
    for (std::size_t i = 0; i < series.size(); ++i) {
        const Series& s = series[i];
        svg << "<polyline fill=\"none\" stroke=\"" << kPalette[i % kPaletteSize]
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t j = 0; j < s.x.size(); ++j) {
            if (j) svg << " ";
            svg << fmt("%.2f", f.sx(s.x[j])) << "," << fmt("%.2f", f.sy(s.y[j]));
        }
        svg << "\"/>\n";
        svg << "<text x=\"" << fmt("%.1f", f.px0 + 8) << "\" y=\""
            << fmt("%.1f", f.py0 + 14 + 14.0 * static_cast<double>(i))
            << "\" font-family=\"monospace\" font-size=\"11\" fill=\""
            << kPalette[i % kPaletteSize] << "\">" << s.label << "</text>\n";
    }
    svg << "</svg>\n";
    write_text_file(out_base + ".svg", svg.str());
    write_text_file(out_base + ".txt", render_text_chart(series, f, "step", "loss"));
}

void emit_scatter_plot(const std::string& comparison_csv, const std::string& out_base) {
    const CsvTable table = read_csv(comparison_csv);
    if (table.rows.empty()) throw ConfigError("no data rows to plot in " + comparison_csv);
    const std::size_t name_col = column_index(table, "variant", comparison_csv);
    const std::size_t flops_col = column_index(table, "flops", comparison_csv);
    const std::size_t em_col = column_index(table, "exact_match", comparison_csv);

    std::vector<Series> series;
    for (const std::vector<std::string>& row : table.rows) {
        if (row.size() <= std::max({name_col, flops_col, em_col}))
            throw ConfigError("short row in " + comparison_csv);
        Series s;
        s.label = row[name_col];
        s.x.push_back(std::stod(row[flops_col]));
        s.y.push_back(std::stod(row[em_col]));
        series.push_back(std::move(s));
    }

    Frame f;
    f.x0 = series[0].x[0];
    f.x1 = f.x0;
    for (const Series& s : series) {
        f.x0 = std::min(f.x0, s.x[0]);
        f.x1 = std::max(f.x1, s.x[0]);
    }
    pad_degenerate(f.x0, f.x1);
    const double x_pad = (f.x1 - f.x0) * 0.08;
    f.x0 -= x_pad;
    f.x1 += x_pad;
    f.y0 = 0.0;
    f.y1 = 1.0;
    f.px0 = 64;
    f.px1 = 704;
    f.py0 = 18;
    f.py1 = 396;

    std::ostringstream svg;
    svg << svg_open(720, 440);
    svg << svg_axes(f, "forward flops", "exact match");
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double cx = f.sx(series[i].x[0]);
        const double cy = f.sy(series[i].y[0]);
        svg << "<circle cx=\"" << fmt("%.2f", cx) << "\" cy=\"" << fmt("%.2f", cy)
            << "\" r=\"4\" fill=\"" << kPalette[i % kPaletteSize] << "\"/>\n";
        svg << "<text x=\"" << fmt("%.2f", cx + 7) << "\" y=\"" << fmt("%.2f", cy - 6)
            << "\" font-family=\"monospace\" font-size=\"11\" fill=\"#333333\">"
            << series[i].label << "</text>\n";
    }
    svg << "</svg>\n";
    write_text_file(out_base + ".svg", svg.str());
    write_text_file(out_base + ".txt",
                    render_text_chart(series, f, "forward flops", "exact match"));
}

}  // namespace fusionlab
