#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pforge/errors.hpp"

namespace pforge {

class UnsupportedDimensionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// N points in [0,1]^K, row-major.
class PointSet {
public:
    explicit PointSet(int dimension);
    PointSet(int dimension, std::vector<double> flat);
    static PointSet from_rows(const std::vector<std::vector<double>>& rows);

    int dimension() const { return dim_; }
    std::size_t size() const { return data_.size() / dim_; }
    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * dim_, static_cast<std::size_t>(dim_)};
    }
    void push_row(std::span<const double> p);
    const std::vector<double>& data() const { return data_; }

    void validate_unit_cube() const;  // throws if any coordinate leaves [0,1]

private:
    int dim_;
    std::vector<double> data_;
};

PointSet load_pointset(const std::string& path);
void save_pointset(const PointSet& z, const std::string& path);

struct CoverageConfig {
    std::size_t n_samples = 10000;
    double target_fraction = 0.99;
    std::size_t trials = 1000;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MetricReport {
    double coverage = 0.0;
    double hull_volume = 0.0;
    double min_pairwise = 0.0;
    double mean_pairwise = 0.0;
    double dispersion = 0.0;
    double kl_divergence = 0.0;
    double aggregate = 0.0;
    double radius_used = 0.0;
};

nlohmann::json report_to_json(const MetricReport& r);
MetricReport report_from_json(const nlohmann::json& j);
std::string metric_csv_header();
std::string metric_csv_row(const MetricReport& r);

// One calibration trial against an explicit reference population: the
// target_fraction quantile of sample-to-nearest-population distances
// (the smallest radius covering at least that fraction of samples).
double quantile_nn_radius(const PointSet& population, std::size_t n_samples,
                          double target_fraction, std::uint64_t seed);

// Mean quantile radius over cfg.trials randomized Sobol populations of the
// given size. Deterministic given cfg.seed.
double calibrate_radius(std::size_t population_size, int dimension, const CoverageConfig& cfg);

// Fraction of seeded-uniform samples within Euclidean distance `radius` of
// some point of z.
double coverage(const PointSet& z, double radius, std::size_t n_samples, std::uint64_t seed);

// Area (K=2) or volume (K=3) of the convex hull; degenerate sets give 0.
// Other dimensions raise UnsupportedDimensionError.
double convex_hull_volume(const PointSet& z);

double min_pairwise_distance(const PointSet& z);
double mean_pairwise_distance(const PointSet& z);

// Monte-Carlo estimate of the largest empty-ball radius: the max over
// seeded-uniform samples of the distance to the nearest member of z.
double dispersion(const PointSet& z, std::size_t n_samples, std::uint64_t seed);

// Binned KL divergence between z and shifted Sobol reference populations of
// equal size, averaged over cfg.trials. Additive smoothing on both sides.
double kl_divergence(const PointSet& z, const CoverageConfig& cfg);

// Histogram plumbing shared by kl_divergence; exposed for direct testing.
int kl_bins_per_dim(std::size_t n, int dimension);
std::vector<std::size_t> histogram_counts(const PointSet& z, int bins_per_dim);
double smoothed_kl(const std::vector<std::size_t>& p_counts,
                   const std::vector<std::size_t>& q_counts, double alpha = 0.5);

// All six metrics plus the normalized aggregate in [0,1]. The aggregate is the
// unweighted mean of coverage, hull_volume, min/sqrt(K), mean/sqrt(K),
// 1 - dispersion/sqrt(K), and exp(-kl), each clamped to [0,1].
MetricReport metric_report(const PointSet& z, double radius, const CoverageConfig& cfg);

}  // namespace pforge
