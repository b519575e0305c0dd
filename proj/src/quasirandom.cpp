#include "pforge/quasirandom.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "pforge/errors.hpp"
#include "pforge/rng.hpp"

namespace pforge {

namespace {

// Joe-Kuo "new-joe-kuo-6" direction numbers for dimensions 2..16.
// Kept in sync with data/sobol_direction_numbers.txt (test-enforced).
constexpr struct {
    int d;
    int s;
    std::uint32_t a;
    std::uint32_t m[6];
} kBuiltinRows[] = {
    {2, 1, 0, {1}},
    {3, 2, 1, {1, 3}},
    {4, 3, 1, {1, 3, 1}},
    {5, 3, 2, {1, 1, 1}},
    {6, 4, 1, {1, 1, 3, 3}},
    {7, 4, 4, {1, 3, 5, 13}},
    {8, 5, 2, {1, 1, 5, 5, 17}},
    {9, 5, 4, {1, 1, 5, 5, 5}},
    {10, 5, 7, {1, 1, 7, 11, 19}},
    {11, 5, 11, {1, 1, 5, 1, 1}},
    {12, 5, 13, {1, 1, 1, 3, 11}},
    {13, 5, 14, {1, 3, 5, 5, 31}},
    {14, 6, 1, {1, 3, 3, 9, 7, 49}},
    {15, 6, 13, {1, 1, 1, 15, 21, 21}},
    {16, 6, 16, {1, 3, 1, 13, 27, 49}},
};

constexpr double kPointScale = 0x1.0p-32;  // 1 / 2^32

std::array<std::uint32_t, SobolGenerator::kBits> expand_directions(const SobolTable::Row& row) {
    const int s = row.degree;
    std::vector<std::uint32_t> m(row.initial.begin(), row.initial.end());
    m.resize(SobolGenerator::kBits);
    for (int k = s; k < SobolGenerator::kBits; ++k) {
        std::uint32_t v = m[k - s] ^ (m[k - s] << s);
        for (int j = 1; j < s; ++j) {
            if ((row.poly_code >> (s - 1 - j)) & 1u) v ^= m[k - j] << j;
        }
        m[k] = v;
    }
    std::array<std::uint32_t, SobolGenerator::kBits> dirs{};
    for (int k = 0; k < SobolGenerator::kBits; ++k) dirs[k] = m[k] << (SobolGenerator::kBits - 1 - k);
    return dirs;
}

std::array<std::uint32_t, SobolGenerator::kBits> radical_inverse_directions() {
    std::array<std::uint32_t, SobolGenerator::kBits> dirs{};
    for (int k = 0; k < SobolGenerator::kBits; ++k) dirs[k] = 1u << (SobolGenerator::kBits - 1 - k);
    return dirs;
}

}  // namespace

void SobolTable::validate() const {
    int expected = 2;
    for (const Row& row : rows) {
        if (row.dimension != expected)
            throw ValidationError("sobol table: expected row for dimension " +
                                  std::to_string(expected) + ", got " +
                                  std::to_string(row.dimension));
        if (row.degree < 1 || static_cast<int>(row.initial.size()) != row.degree)
            throw ValidationError("sobol table: dimension " + std::to_string(row.dimension) +
                                  " has degree/initial mismatch");
        for (int i = 0; i < row.degree; ++i) {
            const std::uint32_t m = row.initial[i];
            if ((m & 1u) == 0 || m >= (1u << (i + 1)))
                throw ValidationError("sobol table: invalid m_" + std::to_string(i + 1) +
                                      " for dimension " + std::to_string(row.dimension));
        }
        ++expected;
    }
}

const SobolTable& SobolTable::builtin() {
    static const SobolTable table = [] {
        SobolTable t;
        for (const auto& r : kBuiltinRows) {
            SobolTable::Row row;
            row.dimension = r.d;
            row.degree = r.s;
            row.poly_code = r.a;
            row.initial.assign(r.m, r.m + r.s);
            t.rows.push_back(std::move(row));
        }
        t.validate();
        return t;
    }();
    return table;
}

SobolTable SobolTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("sobol table: cannot open " + path);
    SobolTable table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line[0] == 'd') continue;
        std::istringstream row_in(line);
        Row row;
        if (!(row_in >> row.dimension >> row.degree >> row.poly_code))
            throw ValidationError("sobol table: malformed row: " + line);
        std::uint32_t m = 0;
        while (row_in >> m) row.initial.push_back(m);
        table.rows.push_back(std::move(row));
    }
    table.validate();
    return table;
}

SobolGenerator::SobolGenerator(int dimension, std::vector<double> shift, const SobolTable& table)
    : dim_(dimension), shift_(std::move(shift)) {
    if (dim_ < 1 || dim_ > kMaxDimension || dim_ > table.max_dimension())
        throw ValidationError("sobol: dimension " + std::to_string(dim_) +
                              " outside supported range 1.." + std::to_string(kMaxDimension));
    if (!shift_.empty() && static_cast<int>(shift_.size()) != dim_)
        throw ValidationError("sobol: shift length does not match dimension");
    for (double s : shift_) {
        if (!(s >= 0.0 && s < 1.0)) throw ValidationError("sobol: shift coordinates must lie in [0,1)");
    }
    directions_.reserve(dim_);
    directions_.push_back(radical_inverse_directions());
    for (int d = 2; d <= dim_; ++d) directions_.push_back(expand_directions(table.rows[d - 2]));
    state_.assign(dim_, 0u);
}

void SobolGenerator::next(std::span<double> out) {
    if (static_cast<int>(out.size()) != dim_)
        throw ValidationError("sobol: output span size does not match dimension");
    if (index_ > 0) {
        // Gray-code step: flip the direction of the lowest zero bit of (index-1).
        const int c = std::countr_one(index_ - 1);
        for (int d = 0; d < dim_; ++d) state_[d] ^= directions_[d][c];
    }
    ++index_;
    for (int d = 0; d < dim_; ++d) {
        double x = static_cast<double>(state_[d]) * kPointScale;
        if (!shift_.empty()) {
            x += shift_[d];
            if (x >= 1.0) x -= 1.0;
        }
        out[d] = x;
    }
}

std::vector<double> SobolGenerator::next_point() {
    std::vector<double> p(dim_);
    next(std::span<double>(p));
    return p;
}

void sobol_fill(int dimension, std::size_t n, const std::vector<double>& shift,
                std::vector<double>& out) {
    if (n < 1) throw ValidationError("sobol: point count must be >= 1");
    SobolGenerator gen(dimension, shift);
    out.resize(n * static_cast<std::size_t>(dimension));
    for (std::size_t i = 0; i < n; ++i)
        gen.next(std::span<double>(out.data() + i * dimension, dimension));
}

std::vector<std::vector<double>> sobol_points(int dimension, std::size_t n,
                                              const std::vector<double>& shift) {
    std::vector<double> flat;
    sobol_fill(dimension, n, shift, flat);
    std::vector<std::vector<double>> points(n, std::vector<double>(dimension));
    for (std::size_t i = 0; i < n; ++i)
        for (int d = 0; d < dimension; ++d) points[i][d] = flat[i * dimension + d];
    return points;
}

std::vector<double> random_shift(int dimension, std::uint64_t seed) {
    if (dimension < 1) throw ValidationError("random_shift: dimension must be >= 1");
    Rng rng(mix_seed(seed, "toroidal-shift"));
    std::vector<double> shift(dimension);
    for (double& s : shift) s = rng.unit();
    return shift;
}

}  // namespace pforge
