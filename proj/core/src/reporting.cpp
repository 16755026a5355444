#include "promptcal/reporting.hpp"

#include <cstdio>
#include <filesystem>

#include "promptcal/errors.hpp"
#include "promptcal/text.hpp"

namespace promptcal {

namespace fs = std::filesystem;

std::string comparison_csv(const std::vector<CalibrationReport>& reports) {
    std::string out =
        "method,ece,brier,valid,accuracy_all,high_conf_accuracy,avg_conf_incorrect,"
        "avg_conf_incorrect_std\n";
    for (const auto& r : reports) {
        out += r.method;
        out += ',';
        if (r.ece) out += fmt_double(*r.ece);
        out += ',';
        if (r.brier) out += fmt_double(*r.brier);
        out += ',';
        out += std::to_string(r.n_valid);
        out += ',';
        out += fmt_double(r.accuracy_all);
        out += ',';
        if (r.high_conf_accuracy) out += fmt_double(*r.high_conf_accuracy);
        out += ',';
        if (r.avg_conf_incorrect) out += fmt_double(r.avg_conf_incorrect->mean);
        out += ',';
        if (r.avg_conf_incorrect) out += fmt_double(r.avg_conf_incorrect->stddev);
        out += '\n';
    }
    return out;
}

std::string merged_curves_csv(const std::vector<CalibrationReport>& reports) {
    std::string out = "method,bin_lo,bin_hi,count,mean_conf,mean_acc\n";
    for (const auto& r : reports) {
        for (const auto& b : r.bins) {
            out += r.method;
            out += ',';
            out += fmt_double(b.lo);
            out += ',';
            out += fmt_double(b.hi);
            out += ',';
            out += std::to_string(b.count);
            out += ',';
            if (b.mean_conf) out += fmt_double(*b.mean_conf);
            out += ',';
            if (b.mean_acc) out += fmt_double(*b.mean_acc);
            out += '\n';
        }
    }
    return out;
}

namespace {

constexpr double kW = 640, kH = 480;
constexpr double kMarginL = 60, kMarginR = 160, kMarginT = 30, kMarginB = 50;

double sx(double v) { return kMarginL + v * (kW - kMarginL - kMarginR); }
double sy(double v) { return kH - kMarginB - v * (kH - kMarginT - kMarginB); }

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

}  // namespace

std::string curves_svg(const std::vector<CalibrationReport>& reports) {
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
           "viewBox=\"0 0 640 480\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";

    // axes with 0.2 gridlines
    for (int i = 0; i <= 5; ++i) {
        const double v = i / 5.0;
        svg += "<line x1=\"" + num(sx(v)) + "\" y1=\"" + num(sy(0)) + "\" x2=\"" + num(sx(v)) +
               "\" y2=\"" + num(sy(1)) + "\" stroke=\"#dddddd\"/>\n";
        svg += "<line x1=\"" + num(sx(0)) + "\" y1=\"" + num(sy(v)) + "\" x2=\"" + num(sx(1)) +
               "\" y2=\"" + num(sy(v)) + "\" stroke=\"#dddddd\"/>\n";
        svg += "<text x=\"" + num(sx(v) - 8) + "\" y=\"" + num(sy(0) + 18) + "\">" + num(v) +
               "</text>\n";
        svg += "<text x=\"" + num(sx(0) - 32) + "\" y=\"" + num(sy(v) + 4) + "\">" + num(v) +
               "</text>\n";
    }
    svg += "<text x=\"" + num(sx(0.40)) + "\" y=\"" + num(kH - 12) +
           "\">mean confidence</text>\n";
    svg += "<text x=\"14\" y=\"" + num(sy(0.5)) +
           "\" transform=\"rotate(-90 14 " + num(sy(0.5)) + ")\">mean accuracy</text>\n";

    // perfect-calibration diagonal
    svg += "<line x1=\"" + num(sx(0)) + "\" y1=\"" + num(sy(0)) + "\" x2=\"" + num(sx(1)) +
           "\" y2=\"" + num(sy(1)) + "\" stroke=\"#888888\" stroke-dasharray=\"6 4\"/>\n";

    for (std::size_t r = 0; r < reports.size(); ++r) {
        const char* color = kPalette[r % (sizeof(kPalette) / sizeof(kPalette[0]))];
        std::string points;
        for (const auto& b : reports[r].bins) {
            if (!b.mean_conf || !b.mean_acc) continue;
            points += num(sx(*b.mean_conf)) + "," + num(sy(*b.mean_acc)) + " ";
        }
        if (!points.empty()) {
            svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
                   "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
            for (const auto& b : reports[r].bins) {
                if (!b.mean_conf || !b.mean_acc) continue;
                svg += "<circle cx=\"" + num(sx(*b.mean_conf)) + "\" cy=\"" +
                       num(sy(*b.mean_acc)) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
            }
        }
        const double ly = kMarginT + 16 + 18 * static_cast<double>(r);
        svg += "<line x1=\"" + num(kW - kMarginR + 12) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
               num(kW - kMarginR + 34) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color +
               "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + num(kW - kMarginR + 40) + "\" y=\"" + num(ly) + "\">" +
               reports[r].method + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

std::string resolve_report_path(const std::string& arg) {
    if (fs::is_regular_file(arg)) return arg;
    if (fs::is_directory(arg)) {
        const fs::path direct = fs::path(arg) / "report.json";
        if (fs::is_regular_file(direct)) return direct.string();
        // training runs carry eval_step_{n}.json; take the highest step
        long best_step = -1;
        fs::path best;
        for (const auto& entry : fs::directory_iterator(arg)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("eval_step_", 0) == 0 && name.size() > 15 &&
                name.substr(name.size() - 5) == ".json") {
                const long step = std::stol(name.substr(10, name.size() - 15));
                if (step > best_step) {
                    best_step = step;
                    best = entry.path();
                }
            }
        }
        if (best_step >= 0) return best.string();
        throw IoError("no report.json or eval_step_{n}.json found in '" + arg + "'");
    }
    throw IoError("report input '" + arg + "' does not exist");
}

}  // namespace promptcal
