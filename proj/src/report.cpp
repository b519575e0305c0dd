#include "pforge/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "pforge/errors.hpp"

namespace pforge {

using nlohmann::json;

std::vector<CurvePoint> read_run_curve(const std::string& candidates_jsonl) {
    std::ifstream in(candidates_jsonl);
    if (!in) throw ValidationError("cannot open " + candidates_jsonl);
    std::vector<CurvePoint> curve;
    double best_aggregate = 0.0;
    double best_coverage = 0.0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json record = json::parse(line);
        const json& candidate = record.at("candidate");
        CurvePoint point;
        point.iteration = record.value("iter", 0);
        point.candidate_id = candidate.value("candidate_id", "");
        point.failed = candidate.value("failed", false);
        if (!point.failed) {
            const json& mean = candidate.at("mean");
            point.aggregate = mean.value("aggregate", 0.0);
            point.coverage = mean.value("coverage", 0.0);
            best_aggregate = std::max(best_aggregate, point.aggregate);
            best_coverage = std::max(best_coverage, point.coverage);
        }
        point.best_aggregate = best_aggregate;
        point.best_coverage = best_coverage;
        curve.push_back(std::move(point));
    }
    if (curve.empty()) throw ValidationError("no candidates found in " + candidates_jsonl);
    return curve;
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write " + path);
    out << "iteration,candidate_id,failed,aggregate,coverage,best_aggregate,best_coverage\n";
    char buf[256];
    for (const CurvePoint& p : curve) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.17g,%.17g,%.17g,%.17g\n", p.iteration,
                      p.candidate_id.c_str(), p.failed ? 1 : 0, p.aggregate, p.coverage,
                      p.best_aggregate, p.best_coverage);
        out << buf;
    }
}

void write_curve_svg(const std::vector<CurvePoint>& curve, const std::string& path) {
    if (curve.empty()) throw ValidationError("empty curve");
    const double width = 720, height = 420;
    const double left = 60, right = 20, top = 30, bottom = 50;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;
    const double n = static_cast<double>(curve.size());

    auto x_at = [&](std::size_t i) {
        return left + plot_w * (n <= 1 ? 0.5 : static_cast<double>(i) / (n - 1));
    };
    auto y_at = [&](double v) { return top + plot_h * (1.0 - std::clamp(v, 0.0, 1.0)); };

    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write " + path);
    char buf[512];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    // axes + gridlines at 0, 0.25, ..., 1
    for (int g = 0; g <= 4; ++g) {
        const double v = g / 4.0;
        std::snprintf(buf, sizeof(buf),
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\" "
                      "fill=\"#555\">%.2f</text>\n",
                      left, y_at(v), width - right, y_at(v), left - 6, y_at(v) + 4, v);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#333\"/>\n",
                  left, top + plot_h, width - right, top + plot_h);
    out << buf;
    out << "<text x=\"" << (left + plot_w / 2) << "\" y=\"" << (height - 14)
        << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333\">evaluated candidates "
           "(run order)</text>\n";
    out << "<text x=\"16\" y=\"" << (top + plot_h / 2)
        << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333\" transform=\"rotate(-90 16 "
        << (top + plot_h / 2) << ")\">aggregate score</text>\n";

    // scatter of individual candidates
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (curve[i].failed) continue;
        std::snprintf(buf, sizeof(buf),
                      "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"2.5\" fill=\"#7aa6d8\" "
                      "fill-opacity=\"0.7\"/>\n",
                      x_at(i), y_at(curve[i].aggregate));
        out << buf;
    }
    // best-so-far polyline
    out << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", x_at(i), y_at(curve[i].best_aggregate));
        out << buf;
    }
    out << "\"/>\n";
    const double final_best = curve.back().best_aggregate;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"end\" "
                  "fill=\"#c0392b\">best aggregate %.6f</text>\n",
                  width - right - 4, y_at(final_best) - 8, final_best);
    out << buf;
    out << "</svg>\n";
}

}  // namespace pforge
