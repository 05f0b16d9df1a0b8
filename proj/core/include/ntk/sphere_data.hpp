#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ntk/classifiers.hpp"

namespace ntk {

/// Seedable generator with named streams. The engine is std::mt19937_64 seeded with
/// splitmix64(seed ^ fnv1a64(stream)); uniforms use the top 53 bits and normals use the
/// Marsaglia polar method, so draws are identical on every platform.
class Rng {
  public:
    Rng(std::uint64_t seed, std::string_view stream);

    std::uint64_t next() { return engine_(); }
    double uniform();  // [0, 1)
    double normal();

  private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

/// n points uniform on the non-negative orthant of S^d, one per row (d + 1 columns).
Eigen::MatrixXd sample_uniform(int d, int n, std::uint64_t seed);

/// Hyperspherical angles phi_1..phi_d in [0, pi/2]: x_0 = cos phi_1,
/// x_k = sin phi_1 ... sin phi_k cos phi_{k+1}, x_d = sin phi_1 ... sin phi_d.
Eigen::VectorXd angles_to_point(const std::vector<double>& angles);
std::vector<double> point_to_angles(const Eigen::VectorXd& point);

/// Surface area of the orthant part of S^d.
double orthant_area(int d);

/// Product of angle intervals; uniform densities on it are taken w.r.t. surface measure.
struct AngleBox {
    std::vector<std::pair<double, double>> ranges;

    bool contains(const std::vector<double>& angles) const;
    double area() const;  // surface measure, weight sin^{d-j}(phi_j) on the j-th angle
};

/// Finite mixture of uniform box densities.
struct ClassConditional {
    std::vector<AngleBox> boxes;
    std::vector<double> weights;

    double density(const std::vector<double>& angles) const;
    static ClassConditional uniform(int d);
};

struct MixtureSpec {
    int d = 2;
    double prior_p = 0.5;  // P(y = +1)
    ClassConditional positive;
    ClassConditional negative;
    std::uint64_t seed = 0;

    /// Throws SpecInvalid.
    void validate() const;
};

/// Two overlapping boxes in the first two angles, full range in the others. With
/// informative unset both classes share the uniform density.
MixtureSpec two_cap_mixture(int d, double prior_p, bool informative, std::uint64_t seed = 0);

void to_json(nlohmann::json& j, const MixtureSpec& s);
void from_json(const nlohmann::json& j, MixtureSpec& s);

struct MixtureSample {
    LabeledDataset data;
    double acceptance_rate = 0.0;
};

/// Labels with prior p, points by rejection from the uniform proposal against the exact
/// density supremum. stream distinguishes draws that share a seed (train, test, trial).
MixtureSample sample_mixture(const MixtureSpec& spec, int n, std::string_view stream = "sample");

struct BayesOracle {
    MixtureSpec spec;
    double risk = 0.0;     // Monte Carlo estimate
    double risk_se = 0.0;  // its standard error
    double exact_risk = 0.0;

    int decide(const Eigen::VectorXd& point) const;
};

BayesOracle bayes_oracle(const MixtureSpec& spec, int mc_samples);

/// Integral of min(p f_1, (1 - p) f_-1) over the sphere, summed cell by cell.
double exact_bayes_risk(const MixtureSpec& spec);

/// Smallest angular distance from the point to a box edge strictly inside (0, pi/2).
double edge_distance(const MixtureSpec& spec, const Eigen::VectorXd& point);

/// CSV with header x0,...,xd,label; values written with 17 significant digits.
void write_dataset_csv(const std::string& path, const LabeledDataset& data);

/// Throws MalformedDataset with the zero-based data row of the first invalid line.
LabeledDataset read_dataset_csv(const std::string& path);

}  // namespace ntk
