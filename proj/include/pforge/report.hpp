#pragma once

#include <string>
#include <vector>

namespace pforge {

// One evaluated candidate from candidates.jsonl, with the running best
// recomputed over successful candidates.
struct CurvePoint {
    int iteration = 0;
    std::string candidate_id;
    bool failed = false;
    double aggregate = 0.0;
    double coverage = 0.0;
    double best_aggregate = 0.0;  // best-so-far including this point
    double best_coverage = 0.0;
};

std::vector<CurvePoint> read_run_curve(const std::string& candidates_jsonl);
void write_curve_csv(const std::vector<CurvePoint>& curve, const std::string& path);

// Static SVG: scatter of per-candidate aggregates plus the best-so-far
// polyline, labeled with the final best value.
void write_curve_svg(const std::vector<CurvePoint>& curve, const std::string& path);

}  // namespace pforge
