#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ntk/dual_activation.hpp"

namespace ntk {

/// Points on the non-negative part of the unit sphere with labels in {-1, +1}.
class LabeledDataset {
  public:
    /// Throws MalformedDataset naming the first offending row.
    LabeledDataset(Eigen::MatrixXd points, std::vector<int> labels);

    const Eigen::MatrixXd& points() const noexcept { return points_; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    int size() const noexcept { return static_cast<int>(labels_.size()); }
    int ambient_dim() const noexcept { return static_cast<int>(points_.cols()); }  // d + 1

  private:
    Eigen::MatrixXd points_;
    std::vector<int> labels_;
};

/// Checks the unit-norm / non-negative invariants of every row; returns the first bad row or -1.
long first_invalid_row(const Eigen::MatrixXd& points, std::string* why = nullptr);

/// A kernel that depends only on z = <x, x~>, given through its logarithm so that
/// deep kernels whose entries span thousands of orders of magnitude stay representable.
struct RadialKernel {
    std::string name;
    std::function<double(double)> log_value;
    bool singular_at_one = false;

    double value(double z) const { return std::exp(log_value(z)); }
    static RadialKernel from_function(std::string name, std::function<double(double)> k,
                                      bool singular_at_one = false);
};

struct Prediction {
    int label = 1;
    /// Signed vote behind the label. Kernel methods report it relative to the largest
    /// kernel weight of that query; an exact hit on a singular kernel reports +-inf.
    double vote = 0.0;
};

/// Gram matrix K_n + ridge I, scaled by exp(-log_scale) and factorized.
struct GramSystem {
    Eigen::MatrixXd gram;
    double log_scale = 0.0;
    double jitter_used = 0.0;
    Eigen::LLT<Eigen::MatrixXd> factor;

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return factor.solve(rhs); }
};

/// Throws IllConditioned when no jitter up to 1e-8 times the mean diagonal makes it positive definite.
GramSystem build_gram(const RadialKernel& kernel, const LabeledDataset& data, double ridge = 0.0);

/// K(x_i, x_j) / sqrt(K(x_i, x_i) K(x_j, x_j)).
Eigen::MatrixXd normalized_gram(const RadialKernel& kernel, const LabeledDataset& data);

/// sign(y^T (K_n + ridge I)^-1 K(X, x)), sign(0) = +1. A kernel singular at 1 has no
/// finite Gram matrix; the machine then reduces to the smoother.
std::vector<Prediction> kernel_machine_predict(const RadialKernel& kernel, const LabeledDataset& data,
                                               const Eigen::MatrixXd& queries, double ridge = 0.0);

/// sign(sum_i y_i K(x_i, x)), sign(0) = +1. For singular kernels a query with <x, x_i> = 1
/// takes the label of the first such training point.
std::vector<Prediction> kernel_smoother_predict(const RadialKernel& kernel, const LabeledDataset& data,
                                                const Eigen::MatrixXd& queries);

/// Label of the training point with the largest inner product; ties go to the lowest index.
std::vector<Prediction> one_nn_predict(const LabeledDataset& data, const Eigen::MatrixXd& queries);

Prediction majority_vote_predict(const LabeledDataset& data);

/// Finite depth gives K^(L); no depth gives the normalized depth limit psi, which exists
/// only for singular-kernel duals (UnsupportedLimit otherwise).
RadialKernel deep_ntk_kernel(const Dual& dual, std::optional<int> depth);

/// 1 / |x - x~|^d = (2 (1 - z))^(-d/2).
RadialKernel hilbert_kernel(int d);

std::vector<Prediction> hilbert_smoother_predict(const LabeledDataset& data,
                                                 const Eigen::MatrixXd& queries, int d);

/// Inverse of (c_diag - c_off) I + c_off J.
Eigen::MatrixXd structured_inverse(double c_diag, double c_off, int n);

/// CSV with header query_index,label,vote.
void write_predictions_csv(std::ostream& out, const std::vector<Prediction>& predictions);

}  // namespace ntk
