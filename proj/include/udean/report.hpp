#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace udean {

struct ReportResult {
    bool complete = false;
    int64_t iterations = 0;
    int64_t epochs_validated = 0;
    std::vector<std::filesystem::path> figures;
    std::filesystem::path summary;
};

/// Reads whatever a run directory holds (a truncated loss log is fine) and
/// writes figures/loss_curves.svg, figures/validation.svg and summary.txt.
/// Runs without the completion marker are labelled INCOMPLETE.
ReportResult write_report(const std::filesystem::path& run_dir);

/// Minimal line chart: one polyline per series over a shared x axis.
struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series,
                           bool log_y = false);

}  // namespace udean
