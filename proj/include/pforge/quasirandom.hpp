#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pforge {

// Direction-number table for the Sobol sequence (dimensions 2..16; dimension 1
// is the base-2 radical inverse and needs no table row). The repository ships
// the same values as data/sobol_direction_numbers.txt; `builtin()` must stay
// identical to that file, which a unit test enforces.
struct SobolTable {
    struct Row {
        int dimension = 0;
        int degree = 0;               // s: degree of the primitive polynomial
        std::uint32_t poly_code = 0;  // a: inner coefficient bits of the polynomial
        std::vector<std::uint32_t> initial;  // m_1..m_s, odd, m_i < 2^i
    };

    std::vector<Row> rows;

    int max_dimension() const { return static_cast<int>(rows.size()) + 1; }
    void validate() const;

    static const SobolTable& builtin();
    static SobolTable load(const std::string& path);
};

// Single-use cursor over the Sobol sequence in [0,1)^K, optionally rotated by
// a toroidal shift (Cranley-Patterson). Same (K, shift) always replays the
// identical sequence. Not safe for concurrent advancement; create one
// generator per task.
class SobolGenerator {
public:
    static constexpr int kMaxDimension = 16;
    static constexpr int kBits = 32;

    explicit SobolGenerator(int dimension, std::vector<double> shift = {},
                            const SobolTable& table = SobolTable::builtin());

    int dimension() const { return dim_; }

    // Writes the next point into `out` (size must equal dimension()).
    void next(std::span<double> out);
    std::vector<double> next_point();

private:
    int dim_;
    std::uint64_t index_ = 0;
    std::vector<std::array<std::uint32_t, kBits>> directions_;  // per dimension
    std::vector<std::uint32_t> state_;
    std::vector<double> shift_;
};

// First n Sobol points in [0,1)^K, row-major into `out` (resized to n*K).
void sobol_fill(int dimension, std::size_t n, const std::vector<double>& shift,
                std::vector<double>& out);

std::vector<std::vector<double>> sobol_points(int dimension, std::size_t n,
                                              const std::vector<double>& shift = {});

// Deterministic toroidal shift vector in [0,1)^K for randomized trials.
std::vector<double> random_shift(int dimension, std::uint64_t seed);

}  // namespace pforge
