#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "udean/error.hpp"
#include "udean/inference.hpp"

namespace udean {

namespace {

std::string format_range(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

std::vector<std::filesystem::path> export_error_slices(const VolumeImage& err, const std::filesystem::path& dir,
                                                       const std::string& stem, double scale_max) {
    if (!(scale_max > 0.0)) throw ConfigError("error-map colour scale must be positive");
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    const auto nx = err.shape[0], ny = err.shape[1];
    for (int64_t z = 0; z < err.shape[2]; ++z) {
        std::ostringstream name;
        name << stem << "_z" << std::setw(3) << std::setfill('0') << z << "_range0-" << format_range(scale_max)
             << ".pgm";
        const auto path = dir / name.str();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out << "P5\n" << nx << " " << ny << "\n255\n";
        // Rows run along y so the image shows x horizontally.
        std::vector<unsigned char> row(static_cast<size_t>(nx));
        for (int64_t y = 0; y < ny; ++y) {
            for (int64_t x = 0; x < nx; ++x) {
                const double level = std::min(err.at(x, y, z) / scale_max, 1.0);
                row[static_cast<size_t>(x)] = static_cast<unsigned char>(std::lround(std::max(level, 0.0) * 255.0));
            }
            out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
        }
        written.push_back(path);
    }
    return written;
}

std::vector<EvalRecord> evaluate(const std::vector<EvalCase>& cases, std::vector<EvalMethod> methods,
                                 const ScaleFactor& s, const SsimOptions& opt) {
    const bool has_tricubic =
        std::any_of(methods.begin(), methods.end(), [](const EvalMethod& m) { return m.tag == kTricubicTag; });
    if (!has_tricubic)
        methods.insert(methods.begin(),
                       EvalMethod{kTricubicTag, [s](const VolumeImage& lr) { return tricubic_upsample(lr, s); }});
    std::vector<EvalRecord> records;
    for (const auto& method : methods) {
        for (const auto& c : cases) {
            const VolumeImage sr = method.run(c.lr);
            if (sr.shape != c.hr.shape)
                throw ShapeError("method " + method.tag + " produced " + to_string(sr.shape) + " for HR " +
                                 to_string(c.hr.shape));
            const Psnr p = psnr(sr, c.hr);
            records.push_back({c.volume_id, method.tag, ssim_metric(sr, c.hr, opt), p.db, p.infinite});
        }
    }
    return records;
}

std::vector<MethodSummary> summarize(const std::vector<EvalRecord>& records) {
    std::vector<MethodSummary> out;
    for (const auto& r : records) {
        if (std::none_of(out.begin(), out.end(), [&](const MethodSummary& m) { return m.method == r.method; }))
            out.push_back({r.method});
    }
    for (auto& m : out) {
        std::vector<double> ssim, db;
        for (const auto& r : records) {
            if (r.method != m.method) continue;
            ssim.push_back(r.ssim);
            if (!r.psnr_infinite) db.push_back(r.psnr);
        }
        auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
            mean = sd = 0.0;
            if (v.empty()) return;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            for (double x : v) sd += (x - mean) * (x - mean);
            sd = std::sqrt(sd / static_cast<double>(v.size()));
        };
        m.count = static_cast<int64_t>(ssim.size());
        stats(ssim, m.ssim_mean, m.ssim_std);
        stats(db, m.psnr_mean, m.psnr_std);
    }
    return out;
}

void write_metrics_csv(const std::vector<EvalRecord>& records, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "method,volume_id,ssim,psnr\n" << std::setprecision(10) << std::fixed;
    for (const auto& r : records) {
        out << r.method << ',' << r.volume_id << ',' << r.ssim << ',';
        if (r.psnr_infinite) out << "inf";
        else out << r.psnr;
        out << '\n';
    }
}

std::vector<EvalRecord> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    std::vector<EvalRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        EvalRecord r;
        std::string ssim, db;
        if (!std::getline(ls, r.method, ',') || !std::getline(ls, r.volume_id, ',') || !std::getline(ls, ssim, ',') ||
            !std::getline(ls, db))
            throw IoError("malformed metrics row in " + path.string() + ": " + line);
        r.ssim = std::stod(ssim);
        r.psnr_infinite = db == "inf";
        r.psnr = r.psnr_infinite ? std::numeric_limits<double>::infinity() : std::stod(db);
        out.push_back(r);
    }
    return out;
}

void write_summary_csv(const std::vector<MethodSummary>& rows, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "method,count,ssim_mean,ssim_std,psnr_mean,psnr_std\n" << std::setprecision(10) << std::fixed;
    for (const auto& m : rows)
        out << m.method << ',' << m.count << ',' << m.ssim_mean << ',' << m.ssim_std << ',' << m.psnr_mean << ','
            << m.psnr_std << '\n';
}

}  // namespace udean
