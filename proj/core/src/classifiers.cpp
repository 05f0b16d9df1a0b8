#include "ntk/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <stdexcept>

#include "ntk/depth_dynamics.hpp"
#include "ntk/errors.hpp"

namespace ntk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kExactHit = 1.0 - 1e-13;

int sign_label(double v) { return v >= 0.0 ? 1 : -1; }

double clamp_unit(double z) { return std::clamp(z, 0.0, 1.0); }

void check_queries(const LabeledDataset& data, const Eigen::MatrixXd& queries) {
    if (queries.cols() != data.ambient_dim())
        throw std::invalid_argument("query dimension does not match the dataset");
}

}  // namespace

long first_invalid_row(const Eigen::MatrixXd& points, std::string* why) {
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const auto row = points.row(i);
        if (!row.allFinite()) {
            if (why) *why = "non-finite coordinate";
            return static_cast<long>(i);
        }
        if (row.minCoeff() < 0.0) {
            if (why) *why = "negative coordinate";
            return static_cast<long>(i);
        }
        if (std::abs(row.norm() - 1.0) >= 1e-12) {
            if (why) *why = "row is not unit norm";
            return static_cast<long>(i);
        }
    }
    return -1;
}

LabeledDataset::LabeledDataset(Eigen::MatrixXd points, std::vector<int> labels)
    : points_(std::move(points)), labels_(std::move(labels)) {
    if (labels_.empty()) throw MalformedDataset("dataset is empty", 0);
    if (static_cast<std::size_t>(points_.rows()) != labels_.size())
        throw MalformedDataset("point and label counts differ", 0);
    if (points_.cols() < 2) throw MalformedDataset("points need at least two coordinates", 0);
    std::string why;
    if (long bad = first_invalid_row(points_, &why); bad >= 0) throw MalformedDataset(why, bad);
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] != 1 && labels_[i] != -1)
            throw MalformedDataset("label must be -1 or +1", static_cast<long>(i));
    }
}

RadialKernel RadialKernel::from_function(std::string name, std::function<double(double)> k,
                                         bool singular_at_one) {
    RadialKernel out;
    out.name = std::move(name);
    out.log_value = [k = std::move(k)](double z) { return std::log(k(z)); };
    out.singular_at_one = singular_at_one;
    return out;
}

// --------------------------------------------------------------------- Gram

GramSystem build_gram(const RadialKernel& kernel, const LabeledDataset& data, double ridge) {
    if (kernel.singular_at_one) throw UnsupportedLimit("kernel '" + kernel.name + "' is infinite on the diagonal");
    if (ridge < 0.0) throw std::invalid_argument("ridge must be non-negative");
    const Eigen::Index n = data.size();
    const auto& X = data.points();
    Eigen::MatrixXd logs(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        logs(i, i) = kernel.log_value(1.0);
        for (Eigen::Index j = 0; j < i; ++j) {
            logs(i, j) = logs(j, i) = kernel.log_value(clamp_unit(X.row(i).dot(X.row(j))));
        }
    }
    if (logs.array().isNaN().any() || (logs.array() == kInf).any())
        throw NumericalFailure("kernel '" + kernel.name + "' is not finite on the data");

    GramSystem sys;
    sys.log_scale = logs.maxCoeff();
    sys.gram = (logs.array() - sys.log_scale).exp().matrix();
    sys.gram.diagonal().array() += ridge * std::exp(-sys.log_scale);

    const double mean_diag = sys.gram.diagonal().mean();
    for (double jitter : {0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8}) {
        Eigen::MatrixXd m = sys.gram;
        m.diagonal().array() += jitter * mean_diag;
        sys.factor.compute(m);
        if (sys.factor.info() == Eigen::Success &&
            (sys.factor.matrixL().toDenseMatrix().diagonal().array() > 0.0).all()) {
            sys.jitter_used = jitter * mean_diag;
            sys.gram = std::move(m);
            return sys;
        }
    }
    throw IllConditioned("Gram matrix of kernel '" + kernel.name + "' is not positive definite");
}

Eigen::MatrixXd normalized_gram(const RadialKernel& kernel, const LabeledDataset& data) {
    const Eigen::Index n = data.size();
    const auto& X = data.points();
    const double ldiag = kernel.log_value(1.0);
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        g(i, i) = 1.0;
        for (Eigen::Index j = 0; j < i; ++j) {
            g(i, j) = g(j, i) = std::exp(kernel.log_value(clamp_unit(X.row(i).dot(X.row(j)))) - ldiag);
        }
    }
    return g;
}

// --------------------------------------------------------------- predictors

std::vector<Prediction> kernel_machine_predict(const RadialKernel& kernel, const LabeledDataset& data,
                                               const Eigen::MatrixXd& queries, double ridge) {
    check_queries(data, queries);
    if (kernel.singular_at_one) return kernel_smoother_predict(kernel, data, queries);

    const GramSystem sys = build_gram(kernel, data, ridge);
    Eigen::VectorXd y(data.size());
    for (int i = 0; i < data.size(); ++i) y[i] = data.labels()[i];
    const Eigen::VectorXd alpha = sys.solve(y);

    const auto& X = data.points();
    std::vector<Prediction> out(static_cast<std::size_t>(queries.rows()));
    Eigen::VectorXd logk(data.size());
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        for (int i = 0; i < data.size(); ++i) logk[i] = kernel.log_value(clamp_unit(X.row(i).dot(queries.row(q))));
        const double top = logk.maxCoeff();
        double vote = 0.0;
        if (top > -kInf) vote = alpha.dot((logk.array() - top).exp().matrix());
        out[q] = {sign_label(vote), vote};
    }
    return out;
}

std::vector<Prediction> kernel_smoother_predict(const RadialKernel& kernel, const LabeledDataset& data,
                                                const Eigen::MatrixXd& queries) {
    check_queries(data, queries);
    const auto& X = data.points();
    const auto& y = data.labels();
    std::vector<Prediction> out(static_cast<std::size_t>(queries.rows()));
    std::vector<double> logk(static_cast<std::size_t>(data.size()));
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        std::optional<int> hit;
        double top = -kInf;
        for (int i = 0; i < data.size(); ++i) {
            const double z = X.row(i).dot(queries.row(q));
            if (kernel.singular_at_one && z >= kExactHit) {
                hit = i;
                break;
            }
            logk[i] = kernel.log_value(clamp_unit(z));
            if (std::isnan(logk[i])) throw NumericalFailure("kernel '" + kernel.name + "' returned NaN");
            top = std::max(top, logk[i]);
        }
        if (hit) {
            out[q] = {y[*hit], y[*hit] * kInf};
            continue;
        }
        double vote = 0.0;
        if (top > -kInf) {
            for (int i = 0; i < data.size(); ++i) vote += y[i] * std::exp(logk[i] - top);
        }
        out[q] = {sign_label(vote), vote};
    }
    return out;
}

std::vector<Prediction> one_nn_predict(const LabeledDataset& data, const Eigen::MatrixXd& queries) {
    check_queries(data, queries);
    std::vector<Prediction> out(static_cast<std::size_t>(queries.rows()));
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        const Eigen::VectorXd z = data.points() * queries.row(q).transpose();
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < z.size(); ++i) {
            if (z[i] > z[best]) best = i;
        }
        const int label = data.labels()[best];
        out[q] = {label, static_cast<double>(label)};
    }
    return out;
}

Prediction majority_vote_predict(const LabeledDataset& data) {
    double s = 0.0;
    for (int l : data.labels()) s += l;
    return {sign_label(s), s};
}

// ------------------------------------------------------------------- kernels

RadialKernel deep_ntk_kernel(const Dual& dual, std::optional<int> depth) {
    RadialKernel k;
    if (depth) {
        if (*depth < 0) throw std::invalid_argument("depth must be non-negative");
        const int L = *depth;
        k.name = "ntk:" + dual.name() + ":L" + std::to_string(L);
        k.log_value = [dual, L](double z) { return log_ntk(dual, z, L); };
        return k;
    }
    TaxonomyCase c;
    try {
        c = classify_taxonomy(dual).taxonomy_case;
    } catch (const InvalidRegime& e) {
        throw UnsupportedLimit(std::string("no singular depth limit: ") + e.what());
    }
    if (c != TaxonomyCase::SingularKernel) {
        throw UnsupportedLimit("depth limit of '" + dual.name() + "' is a " + to_string(c) +
                               " classifier, not a kernel");
    }
    k.name = "ntk:" + dual.name() + ":inf";
    k.singular_at_one = true;
    k.log_value = [dual](double z) { return std::log(psi(dual, z)); };
    return k;
}

RadialKernel hilbert_kernel(int d) {
    if (d < 1) throw std::invalid_argument("Hilbert kernel needs d >= 1");
    RadialKernel k;
    k.name = "hilbert:" + std::to_string(d);
    k.singular_at_one = true;
    k.log_value = [d](double z) { return -0.5 * d * std::log(2.0 * (1.0 - z)); };
    return k;
}

std::vector<Prediction> hilbert_smoother_predict(const LabeledDataset& data,
                                                 const Eigen::MatrixXd& queries, int d) {
    return kernel_smoother_predict(hilbert_kernel(d), data, queries);
}

Eigen::MatrixXd structured_inverse(double c_diag, double c_off, int n) {
    if (n < 1) throw std::invalid_argument("matrix size must be positive");
    const double g = c_diag - c_off;
    const double h = g + c_off * n;
    if (g == 0.0) throw SingularStructure("diagonal and off-diagonal constants coincide");
    if (h == 0.0) throw SingularStructure("c_diag + (n - 1) c_off vanishes");
    Eigen::MatrixXd inv = Eigen::MatrixXd::Constant(n, n, -c_off / (g * h));
    inv.diagonal().array() += 1.0 / g;
    return inv;
}

void write_predictions_csv(std::ostream& out, const std::vector<Prediction>& predictions) {
    out << "query_index,label,vote\n";
    out << std::setprecision(17);
    for (std::size_t i = 0; i < predictions.size(); ++i)
        out << i << ',' << predictions[i].label << ',' << predictions[i].vote << '\n';
}

}  // namespace ntk
