#include "udean/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "udean/error.hpp"
#include "udean/trainer.hpp"

namespace udean {

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series,
                           bool log_y) {
    constexpr double W = 720, H = 420, left = 70, right = 160, top = 40, bottom = 50;
    const std::array<const char*, 8> colours{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                             "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    auto ty = [&](double v) { return log_y ? std::log10(std::max(v, 1e-12)) : v; };

    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
    auto py = [&](double y) { return H - bottom - (ty(y) - y0) / (y1 - y0) * (H - top - bottom); };

    std::ostringstream os;
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fy = y0 + (y1 - y0) * k / 4.0;
        const double yv = log_y ? std::pow(10.0, fy) : fy;
        const double ypix = H - bottom - (fy - y0) / (y1 - y0) * (H - top - bottom);
        os << "<text x=\"" << left - 6 << "\" y=\"" << ypix + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
        const double xv = x0 + (x1 - x0) * k / 4.0;
        os << "<text x=\"" << px(xv) << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"middle\">" << xv << "</text>\n";
    }
    os << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
    for (size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* colour = colours[k % colours.size()];
        os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
            if (std::isfinite(s.y[i])) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
        os << "\"/>\n";
        const double ly = top + 16.0 * static_cast<double>(k);
        os << "<line x1=\"" << W - right + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - right + 30 << "\" y2=\"" << ly
           << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << W - right + 34 << "\" y=\"" << ly + 4 << "\">" << s.name << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

}  // namespace

ReportResult write_report(const std::filesystem::path& run_dir) {
    if (!std::filesystem::is_directory(run_dir)) throw IoError("run directory " + run_dir.string() + " does not exist");
    ReportResult result;
    result.complete = std::filesystem::exists(run_dir / kCompleteMarker);
    const auto fig_dir = run_dir / "figures";
    std::filesystem::create_directories(fig_dir);

    const std::array<const char*, 9> keys{"total", "i_cyc", "f_cyc", "hr_con", "lr_con", "da", "fa", "lrd", "fd"};
    std::vector<Series> loss_series;
    for (const char* k : keys) loss_series.push_back({k, {}, {}});
    int64_t malformed = 0;
    if (std::ifstream in(run_dir / kLossLogFile); in) {
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception&) {
                ++malformed;  // an aborted run may leave a torn last line
                continue;
            }
            ++result.iterations;
            const double it = j.value("iteration", 0.0);
            for (auto& s : loss_series) {
                if (!j.contains(s.name) || !j.at(s.name).is_number()) continue;
                s.x.push_back(it);
                s.y.push_back(j.at(s.name).get<double>());
            }
        }
    }
    std::erase_if(loss_series, [](const Series& s) { return s.x.empty(); });

    Series ssim{"ssim_mean", {}, {}}, db{"psnr_mean", {}, {}};
    if (std::ifstream in(run_dir / kValidationFile); in) {
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::istringstream ls(line);
            std::string f[5];
            bool ok = true;
            for (int k = 0; k < 5; ++k) ok = ok && static_cast<bool>(std::getline(ls, f[k], ','));
            if (!ok) continue;
            ++result.epochs_validated;
            ssim.x.push_back(std::stod(f[0]));
            ssim.y.push_back(std::stod(f[1]));
            db.x.push_back(std::stod(f[0]));
            db.y.push_back(std::stod(f[3]));
        }
    }

    const std::string suffix = result.complete ? "" : " (INCOMPLETE RUN)";
    write_file(fig_dir / "loss_curves.svg", svg_line_chart("Training losses" + suffix, "iteration", loss_series, true));
    result.figures.push_back(fig_dir / "loss_curves.svg");
    write_file(fig_dir / "validation_ssim.svg", svg_line_chart("Validation SSIM" + suffix, "epoch", {ssim}));
    result.figures.push_back(fig_dir / "validation_ssim.svg");
    write_file(fig_dir / "validation_psnr.svg", svg_line_chart("Validation PSNR (dB)" + suffix, "epoch", {db}));
    result.figures.push_back(fig_dir / "validation_psnr.svg");

    std::ostringstream s;
    s << std::setprecision(6);
    s << "status: " << (result.complete ? "complete" : "INCOMPLETE (no completion marker; partial results)") << '\n';
    s << "iterations logged: " << result.iterations << '\n';
    if (malformed) s << "unparseable log lines skipped: " << malformed << '\n';
    for (const auto& series : loss_series) {
        if (series.name != "total") continue;
        const size_t n = series.y.size();
        const size_t head = std::min<size_t>(10, n);
        double first = 0;
        for (size_t i = 0; i < head; ++i) first += series.y[i] / static_cast<double>(head);
        s << "generator total: first-10 mean " << first << ", last " << series.y.back() << '\n';
    }
    s << "epochs validated: " << result.epochs_validated << '\n';
    if (!ssim.y.empty()) {
        const auto best = std::max_element(ssim.y.begin(), ssim.y.end()) - ssim.y.begin();
        s << "best validation SSIM " << ssim.y[static_cast<size_t>(best)] << " at epoch " << ssim.x[static_cast<size_t>(best)]
          << " (PSNR " << db.y[static_cast<size_t>(best)] << " dB)\n";
    }
    if (std::ifstream in(run_dir / "metrics" / "summary.csv"); in) {
        s << "\nevaluation summary:\n" << in.rdbuf();
    }
    result.summary = run_dir / "summary.txt";
    write_file(result.summary, s.str());
    return result;
}

}  // namespace udean
