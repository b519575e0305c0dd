#include "pforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include "pforge/quasirandom.hpp"
#include "pforge/rng.hpp"

namespace pforge {

using nlohmann::json;

PointSet::PointSet(int dimension) : dim_(dimension) {
    if (dim_ < 1) throw ValidationError("point set dimension must be >= 1");
}

PointSet::PointSet(int dimension, std::vector<double> flat) : dim_(dimension), data_(std::move(flat)) {
    if (dim_ < 1) throw ValidationError("point set dimension must be >= 1");
    if (data_.size() % dim_ != 0)
        throw ValidationError("point set data size is not a multiple of the dimension");
}

PointSet PointSet::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw ValidationError("point set needs at least one row");
    PointSet z(static_cast<int>(rows[0].size()));
    for (const auto& r : rows) z.push_row(std::span<const double>(r));
    return z;
}

void PointSet::push_row(std::span<const double> p) {
    if (static_cast<int>(p.size()) != dim_)
        throw ValidationError("point row has wrong dimension");
    data_.insert(data_.end(), p.begin(), p.end());
}

void PointSet::validate_unit_cube() const {
    for (double v : data_)
        if (!(v >= 0.0 && v <= 1.0))
            throw ValidationError("point coordinate outside [0,1]: " + std::to_string(v));
}

PointSet load_pointset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open point set file: " + path);
    int k = 0;
    std::size_t n = 0;
    if (!(in >> k >> n)) throw ValidationError("point set file: malformed `K N` header");
    if (k < 1 || n < 1) throw ValidationError("point set file: K and N must be >= 1");
    std::vector<double> flat(n * k);
    for (std::size_t i = 0; i < n * k; ++i)
        if (!(in >> flat[i]))
            throw ValidationError("point set file: expected " + std::to_string(n * k) +
                                  " coordinates");
    return PointSet(k, std::move(flat));
}

void save_pointset(const PointSet& z, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write point set file: " + path);
    out << z.dimension() << " " << z.size() << "\n";
    char buf[32];
    for (std::size_t i = 0; i < z.size(); ++i) {
        for (int d = 0; d < z.dimension(); ++d) {
            std::snprintf(buf, sizeof(buf), "%.17g", z.row(i)[d]);
            out << (d ? " " : "") << buf;
        }
        out << "\n";
    }
}

void CoverageConfig::validate() const {
    if (n_samples < 100) throw ValidationError("coverage config: n_samples must be >= 100");
    if (!(target_fraction > 0.0 && target_fraction <= 1.0))
        throw ValidationError("coverage config: target_fraction must be in (0,1]");
    if (trials < 1) throw ValidationError("coverage config: trials must be >= 1");
}

json report_to_json(const MetricReport& r) {
    return json{{"coverage", r.coverage},
                {"hull_volume", r.hull_volume},
                {"min_pairwise", r.min_pairwise},
                {"mean_pairwise", r.mean_pairwise},
                {"dispersion", r.dispersion},
                {"kl", r.kl_divergence},
                {"aggregate", r.aggregate},
                {"radius", r.radius_used}};
}

MetricReport report_from_json(const json& j) {
    MetricReport r;
    r.coverage = j.at("coverage").get<double>();
    r.hull_volume = j.at("hull_volume").get<double>();
    r.min_pairwise = j.at("min_pairwise").get<double>();
    r.mean_pairwise = j.at("mean_pairwise").get<double>();
    r.dispersion = j.at("dispersion").get<double>();
    r.kl_divergence = j.at("kl").get<double>();
    r.aggregate = j.at("aggregate").get<double>();
    r.radius_used = j.at("radius").get<double>();
    return r;
}

std::string metric_csv_header() {
    return "coverage,hull_volume,min_pairwise,mean_pairwise,dispersion,kl,aggregate,radius";
}

std::string metric_csv_row(const MetricReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.coverage,
                  r.hull_volume, r.min_pairwise, r.mean_pairwise, r.dispersion, r.kl_divergence,
                  r.aggregate, r.radius_used);
    return buf;
}

namespace {

double nearest_sq_dist(std::span<const double> p, const PointSet& z) {
    const int k = z.dimension();
    const double* data = z.data().data();
    const std::size_t n = z.size();
    double best = std::numeric_limits<double>::max();
    for (std::size_t i = 0; i < n; ++i) {
        const double* q = data + i * k;
        double d2 = 0.0;
        for (int d = 0; d < k; ++d) {
            const double diff = p[d] - q[d];
            d2 += diff * diff;
        }
        if (d2 < best) best = d2;
    }
    return best;
}

// Smallest order statistic covering at least `fraction` of n values (1-based
// count), computed so that float noise in fraction*n cannot bump the rank.
std::size_t covering_rank(double fraction, std::size_t n) {
    const double target = fraction * static_cast<double>(n);
    auto rank = static_cast<std::size_t>(target);
    if (static_cast<double>(rank) + 1e-9 < target) ++rank;
    if (rank < 1) rank = 1;
    if (rank > n) rank = n;
    return rank;
}

}  // namespace

double quantile_nn_radius(const PointSet& population, std::size_t n_samples,
                          double target_fraction, std::uint64_t seed) {
    if (population.size() < 1) throw ValidationError("quantile_nn_radius: empty population");
    if (n_samples < 1) throw ValidationError("quantile_nn_radius: n_samples must be >= 1");
    const int k = population.dimension();
    Rng rng(seed);
    std::vector<double> d2(n_samples);
    std::vector<double> p(k);
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (int d = 0; d < k; ++d) p[d] = rng.unit();
        d2[s] = nearest_sq_dist(p, population);
    }
    const std::size_t rank = covering_rank(target_fraction, n_samples);
    std::nth_element(d2.begin(), d2.begin() + (rank - 1), d2.end());
    return std::sqrt(d2[rank - 1]);
}

double calibrate_radius(std::size_t population_size, int dimension, const CoverageConfig& cfg) {
    if (population_size < 2)
        throw ValidationError("calibrate_radius: population size must be >= 2");
    cfg.validate();
    std::vector<double> flat;
    double sum = 0.0;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        const auto shift = random_shift(dimension, mix_seed(cfg.seed, "calibration-shift", t));
        sobol_fill(dimension, population_size, shift, flat);
        const PointSet population(dimension, flat);
        sum += quantile_nn_radius(population, cfg.n_samples, cfg.target_fraction,
                                  mix_seed(cfg.seed, "calibration-sample", t));
    }
    return sum / static_cast<double>(cfg.trials);
}

double coverage(const PointSet& z, double radius, std::size_t n_samples, std::uint64_t seed) {
    if (!(radius > 0.0)) throw ValidationError("coverage: radius must be > 0");
    if (z.size() < 1) throw ValidationError("coverage: empty point set");
    const int k = z.dimension();
    const double r2 = radius * radius;
    const double* data = z.data().data();
    const std::size_t n = z.size();
    Rng rng(seed);
    std::vector<double> p(k);
    std::size_t covered = 0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (int d = 0; d < k; ++d) p[d] = rng.unit();
        for (std::size_t i = 0; i < n; ++i) {
            const double* q = data + i * k;
            double d2 = 0.0;
            for (int d = 0; d < k; ++d) {
                const double diff = p[d] - q[d];
                d2 += diff * diff;
            }
            if (d2 <= r2) {
                ++covered;
                break;
            }
        }
    }
    return static_cast<double>(covered) / static_cast<double>(n_samples);
}

namespace {

struct Vec2 {
    double x, y;
};

double cross2(const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Monotone chain hull, then the shoelace formula. Turns within kDegenerateEps
// collapse, so sets that are collinear up to float noise report exactly 0.
constexpr double kDegenerateEps = 1e-12;

double hull_area_2d(const PointSet& z) {
    std::vector<Vec2> pts(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) pts[i] = {z.row(i)[0], z.row(i)[1]};
    std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Vec2& a, const Vec2& b) { return a.x == b.x && a.y == b.y; }),
              pts.end());
    const std::size_t n = pts.size();
    if (n < 3) return 0.0;
    std::vector<Vec2> hull(2 * n);
    std::size_t h = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (h >= 2 && cross2(hull[h - 2], hull[h - 1], pts[i]) <= kDegenerateEps) --h;
        hull[h++] = pts[i];
    }
    const std::size_t lower = h + 1;
    for (std::size_t i = n - 1; i-- > 0;) {
        while (h >= lower && cross2(hull[h - 2], hull[h - 1], pts[i]) <= kDegenerateEps) --h;
        hull[h++] = pts[i];
    }
    if (h < 4) return 0.0;  // all points collapsed onto one chain
    hull.resize(h - 1);
    double twice_area = 0.0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const Vec2& a = hull[i];
        const Vec2& b = hull[(i + 1) % hull.size()];
        twice_area += a.x * b.y - b.x * a.y;
    }
    return std::abs(twice_area) / 2.0;
}

struct Vec3 {
    double x, y, z;
};

Vec3 sub(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
Vec3 cross3(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double dot3(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

struct Face {
    int a, b, c;
};

double signed_dist(const std::vector<Vec3>& p, const Face& f, int i) {
    const Vec3 n = cross3(sub(p[f.b], p[f.a]), sub(p[f.c], p[f.a]));
    return dot3(n, sub(p[i], p[f.a]));
}

// Incremental 3-D hull; adequate for the small point sets used here.
double hull_volume_3d(const PointSet& z) {
    constexpr double kEps = 1e-12;
    const std::size_t n = z.size();
    std::vector<Vec3> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = {z.row(i)[0], z.row(i)[1], z.row(i)[2]};
    if (n < 4) return 0.0;

    // Initial tetrahedron: spread apart, then maximize area, then volume.
    std::size_t i1 = 1;
    double best = -1.0;
    for (std::size_t i = 1; i < n; ++i) {
        const Vec3 d = sub(p[i], p[0]);
        const double len = dot3(d, d);
        if (len > best) best = len, i1 = i;
    }
    if (best < kEps) return 0.0;
    std::size_t i2 = 0;
    best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == 0 || i == i1) continue;
        const Vec3 c = cross3(sub(p[i1], p[0]), sub(p[i], p[0]));
        const double area = dot3(c, c);
        if (area > best) best = area, i2 = i;
    }
    if (best < kEps) return 0.0;
    std::size_t i3 = 0;
    best = -1.0;
    double best_signed = 0.0;
    const Vec3 base_n = cross3(sub(p[i1], p[0]), sub(p[i2], p[0]));
    for (std::size_t i = 0; i < n; ++i) {
        if (i == 0 || i == i1 || i == i2) continue;
        const double v = dot3(base_n, sub(p[i], p[0]));
        if (std::abs(v) > best) best = std::abs(v), best_signed = v, i3 = i;
    }
    if (best < kEps) return 0.0;

    std::vector<Face> faces;
    const int a0 = 0, a1 = static_cast<int>(i1), a2 = static_cast<int>(i2),
              a3 = static_cast<int>(i3);
    if (best_signed < 0) {
        faces = {{a0, a1, a2}, {a0, a3, a1}, {a1, a3, a2}, {a0, a2, a3}};
    } else {
        faces = {{a0, a2, a1}, {a0, a1, a3}, {a1, a2, a3}, {a0, a3, a2}};
    }

    for (int i = 0; i < static_cast<int>(n); ++i) {
        if (i == a0 || i == a1 || i == a2 || i == a3) continue;
        std::vector<char> visible(faces.size(), 0);
        bool any = false;
        for (std::size_t f = 0; f < faces.size(); ++f) {
            if (signed_dist(p, faces[f], i) > kEps) visible[f] = 1, any = true;
        }
        if (!any) continue;
        // Horizon: directed edges of visible faces whose reverse is not visible.
        std::map<std::pair<int, int>, int> edge_count;
        for (std::size_t f = 0; f < faces.size(); ++f) {
            if (!visible[f]) continue;
            const Face& fc = faces[f];
            const int e[3][2] = {{fc.a, fc.b}, {fc.b, fc.c}, {fc.c, fc.a}};
            for (const auto& ed : e) ++edge_count[{ed[0], ed[1]}];
        }
        std::vector<Face> next;
        for (std::size_t f = 0; f < faces.size(); ++f)
            if (!visible[f]) next.push_back(faces[f]);
        for (const auto& [edge, cnt] : edge_count) {
            (void)cnt;
            if (edge_count.find({edge.second, edge.first}) == edge_count.end())
                next.push_back({edge.first, edge.second, i});
        }
        faces = std::move(next);
    }

    double six_vol = 0.0;
    for (const Face& f : faces) six_vol += dot3(p[f.a], cross3(p[f.b], p[f.c]));
    return std::abs(six_vol) / 6.0;
}

}  // namespace

double convex_hull_volume(const PointSet& z) {
    if (z.size() < 1) throw ValidationError("convex_hull_volume: empty point set");
    switch (z.dimension()) {
        case 2:
            return hull_area_2d(z);
        case 3:
            return hull_volume_3d(z);
        default:
            throw UnsupportedDimensionError("convex hull supported for K in {2,3}, got K=" +
                                            std::to_string(z.dimension()));
    }
}

namespace {

template <typename Fold>
double fold_pairwise(const PointSet& z, double init, Fold fold) {
    if (z.size() < 2) throw ValidationError("pairwise distance requires at least 2 points");
    const int k = z.dimension();
    const double* data = z.data().data();
    const std::size_t n = z.size();
    double acc = init;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (int d = 0; d < k; ++d) {
                const double diff = data[i * k + d] - data[j * k + d];
                d2 += diff * diff;
            }
            acc = fold(acc, std::sqrt(d2));
        }
    }
    return acc;
}

}  // namespace

double min_pairwise_distance(const PointSet& z) {
    return fold_pairwise(z, std::numeric_limits<double>::max(),
                         [](double acc, double d) { return std::min(acc, d); });
}

double mean_pairwise_distance(const PointSet& z) {
    const double sum = fold_pairwise(z, 0.0, [](double acc, double d) { return acc + d; });
    const double pairs = static_cast<double>(z.size()) * (z.size() - 1) / 2.0;
    return sum / pairs;
}

double dispersion(const PointSet& z, std::size_t n_samples, std::uint64_t seed) {
    if (z.size() < 1) throw ValidationError("dispersion: empty point set");
    const int k = z.dimension();
    Rng rng(seed);
    std::vector<double> p(k);
    double worst = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (int d = 0; d < k; ++d) p[d] = rng.unit();
        worst = std::max(worst, nearest_sq_dist(p, z));
    }
    return std::sqrt(worst);
}

int kl_bins_per_dim(std::size_t n, int dimension) {
    const double b = std::round(std::pow(static_cast<double>(n), 1.0 / dimension));
    return std::max(2, static_cast<int>(b));
}

std::vector<std::size_t> histogram_counts(const PointSet& z, int bins_per_dim) {
    if (bins_per_dim < 1) throw ValidationError("histogram: bins_per_dim must be >= 1");
    const int k = z.dimension();
    std::size_t total_bins = 1;
    for (int d = 0; d < k; ++d) total_bins *= bins_per_dim;
    std::vector<std::size_t> counts(total_bins, 0);
    for (std::size_t i = 0; i < z.size(); ++i) {
        std::size_t bin = 0;
        for (int d = 0; d < k; ++d) {
            auto c = static_cast<int>(z.row(i)[d] * bins_per_dim);
            c = std::clamp(c, 0, bins_per_dim - 1);
            bin = bin * bins_per_dim + c;
        }
        ++counts[bin];
    }
    return counts;
}

double smoothed_kl(const std::vector<std::size_t>& p_counts,
                   const std::vector<std::size_t>& q_counts, double alpha) {
    if (p_counts.size() != q_counts.size())
        throw ValidationError("smoothed_kl: histogram sizes differ");
    const double bins = static_cast<double>(p_counts.size());
    double np = 0.0, nq = 0.0;
    for (std::size_t c : p_counts) np += static_cast<double>(c);
    for (std::size_t c : q_counts) nq += static_cast<double>(c);
    const double dp = np + alpha * bins;
    const double dq = nq + alpha * bins;
    double kl = 0.0;
    for (std::size_t b = 0; b < p_counts.size(); ++b) {
        const double p = (static_cast<double>(p_counts[b]) + alpha) / dp;
        const double q = (static_cast<double>(q_counts[b]) + alpha) / dq;
        kl += p * std::log(p / q);
    }
    return kl;
}

double kl_divergence(const PointSet& z, const CoverageConfig& cfg) {
    if (z.size() < 2) throw ValidationError("kl_divergence: need at least 2 points");
    const int k = z.dimension();
    if (k < 1 || k > 3)
        throw UnsupportedDimensionError("kl_divergence supported for K in {1,2,3}, got K=" +
                                        std::to_string(k));
    cfg.validate();
    const std::size_t n = z.size();
    const int bins = kl_bins_per_dim(n, k);
    const auto p_counts = histogram_counts(z, bins);
    std::vector<double> flat;
    double sum = 0.0;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        const auto shift = random_shift(k, mix_seed(cfg.seed, "kl-reference-shift", t));
        sobol_fill(k, n, shift, flat);
        const auto q_counts = histogram_counts(PointSet(k, flat), bins);
        sum += smoothed_kl(p_counts, q_counts);
        flat.clear();
    }
    return sum / static_cast<double>(cfg.trials);
}

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

MetricReport metric_report(const PointSet& z, double radius, const CoverageConfig& cfg) {
    if (!(radius > 0.0)) throw ValidationError("metric_report: radius must be > 0");
    z.validate_unit_cube();
    MetricReport r;
    r.radius_used = radius;
    r.coverage = coverage(z, radius, cfg.n_samples, mix_seed(cfg.seed, "report-coverage"));
    r.hull_volume = convex_hull_volume(z);
    r.min_pairwise = min_pairwise_distance(z);
    r.mean_pairwise = mean_pairwise_distance(z);
    r.dispersion = dispersion(z, cfg.n_samples, mix_seed(cfg.seed, "report-dispersion"));
    r.kl_divergence = kl_divergence(z, cfg);
    const double diag = std::sqrt(static_cast<double>(z.dimension()));
    const double terms[6] = {clamp01(r.coverage),
                             clamp01(r.hull_volume),
                             clamp01(r.min_pairwise / diag),
                             clamp01(r.mean_pairwise / diag),
                             clamp01(1.0 - r.dispersion / diag),
                             clamp01(std::exp(-r.kl_divergence))};
    double sum = 0.0;
    for (double t : terms) sum += t;
    r.aggregate = sum / 6.0;
    return r;
}

}  // namespace pforge
