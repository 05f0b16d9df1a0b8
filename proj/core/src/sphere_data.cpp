#include "ntk/sphere_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "ntk/errors.hpp"

namespace ntk {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;
constexpr std::size_t kMaxCells = 4'000'000;

// Integral of sin^k over [a, b] by the reduction formula.
double sin_power_integral(int k, double a, double b) {
    double even = b - a;
    double odd = std::cos(a) - std::cos(b);
    if (k == 0) return even;
    if (k == 1) return odd;
    double prev2 = even, prev1 = odd;  // I_{m-2}, I_{m-1}
    double cur = 0.0;
    for (int m = 2; m <= k; ++m) {
        const double boundary = -(std::pow(std::sin(b), m - 1) * std::cos(b) -
                                  std::pow(std::sin(a), m - 1) * std::cos(a)) / m;
        cur = boundary + (m - 1.0) / m * prev2;
        prev2 = prev1;
        prev1 = cur;
    }
    return cur;
}

double box_area(const std::vector<std::pair<double, double>>& ranges) {
    const int d = static_cast<int>(ranges.size());
    double a = 1.0;
    for (int j = 0; j < d; ++j) a *= sin_power_integral(d - 1 - j, ranges[j].first, ranges[j].second);
    return a;
}

// Calls fn(midpoint_angles, ranges) for every cell of the grid spanned by all box edges.
// Returns false without calling fn when the grid exceeds kMaxCells.
bool for_each_cell(const MixtureSpec& spec,
                   const std::function<void(const std::vector<double>&,
                                            const std::vector<std::pair<double, double>>&)>& fn) {
    std::vector<std::vector<double>> edges(static_cast<std::size_t>(spec.d));
    for (int j = 0; j < spec.d; ++j) {
        edges[j] = {0.0, kHalfPi};
        for (const auto* cc : {&spec.positive, &spec.negative}) {
            for (const auto& box : cc->boxes) {
                edges[j].push_back(box.ranges[j].first);
                edges[j].push_back(box.ranges[j].second);
            }
        }
        std::sort(edges[j].begin(), edges[j].end());
        edges[j].erase(std::unique(edges[j].begin(), edges[j].end()), edges[j].end());
    }
    std::size_t cells = 1;
    for (const auto& e : edges) {
        cells *= e.size() - 1;
        if (cells > kMaxCells) return false;
    }
    std::vector<std::size_t> idx(static_cast<std::size_t>(spec.d), 0);
    std::vector<double> mid(static_cast<std::size_t>(spec.d));
    std::vector<std::pair<double, double>> ranges(static_cast<std::size_t>(spec.d));
    for (std::size_t c = 0; c < cells; ++c) {
        for (int j = 0; j < spec.d; ++j) {
            ranges[j] = {edges[j][idx[j]], edges[j][idx[j] + 1]};
            mid[j] = 0.5 * (ranges[j].first + ranges[j].second);
        }
        fn(mid, ranges);
        for (int j = 0; j < spec.d; ++j) {
            if (++idx[j] < edges[j].size() - 1) break;
            idx[j] = 0;
        }
    }
    return true;
}

double density_sup(const ClassConditional& cc, const MixtureSpec& spec) {
    double sup = 0.0;
    const bool exact = for_each_cell(spec, [&](const std::vector<double>& mid, const auto&) {
        sup = std::max(sup, cc.density(mid));
    });
    if (exact) return sup;
    // Too many cells to enumerate: the sum of the component heights still bounds the density.
    double bound = 0.0;
    for (std::size_t k = 0; k < cc.boxes.size(); ++k) bound += cc.weights[k] / cc.boxes[k].area();
    return bound;
}

void validate_conditional(const ClassConditional& cc, int d, const std::string& which) {
    if (cc.boxes.empty()) throw SpecInvalid(which + " conditional has no boxes");
    if (cc.boxes.size() != cc.weights.size())
        throw SpecInvalid(which + " conditional has mismatched boxes and weights");
    double total = 0.0;
    for (std::size_t k = 0; k < cc.boxes.size(); ++k) {
        const auto& box = cc.boxes[k];
        if (static_cast<int>(box.ranges.size()) != d)
            throw SpecInvalid(which + " box " + std::to_string(k) + " does not have d ranges");
        for (const auto& [lo, hi] : box.ranges) {
            if (!(0.0 <= lo && lo < hi && hi <= kHalfPi + 1e-15))
                throw SpecInvalid(which + " box " + std::to_string(k) + " has a range outside [0, pi/2]");
        }
        if (!(cc.weights[k] > 0.0)) throw SpecInvalid(which + " weights must be positive");
        if (!(box.area() > 0.0)) throw SpecInvalid(which + " box " + std::to_string(k) + " has zero area");
        total += cc.weights[k];
    }
    if (std::abs(total - 1.0) > 1e-12) throw SpecInvalid(which + " weights must sum to 1");
}

}  // namespace

// ----------------------------------------------------------------------- RNG

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed, std::string_view stream) : engine_(splitmix64(seed ^ fnv1a64(stream))) {}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    if (spare_) {
        const double s = *spare_;
        spare_.reset();
        return s;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    return u * f;
}

namespace {

Eigen::VectorXd draw_orthant_point(Rng& rng, int d) {
    Eigen::VectorXd x(d + 1);
    do {
        for (int k = 0; k <= d; ++k) x[k] = std::abs(rng.normal());
    } while (x.norm() == 0.0);
    return x / x.norm();
}

}  // namespace

Eigen::MatrixXd sample_uniform(int d, int n, std::uint64_t seed) {
    if (d < 1 || n < 0) throw std::invalid_argument("sample_uniform needs d >= 1 and n >= 0");
    Rng rng(seed, "sample_uniform");
    Eigen::MatrixXd X(n, d + 1);
    for (int i = 0; i < n; ++i) X.row(i) = draw_orthant_point(rng, d).transpose();
    return X;
}

// -------------------------------------------------------------------- angles

Eigen::VectorXd angles_to_point(const std::vector<double>& angles) {
    const int d = static_cast<int>(angles.size());
    if (d < 1) throw std::invalid_argument("need at least one angle");
    Eigen::VectorXd x(d + 1);
    double s = 1.0;
    for (int k = 0; k < d; ++k) {
        x[k] = s * std::cos(angles[k]);
        s *= std::sin(angles[k]);
    }
    x[d] = s;
    return x;
}

std::vector<double> point_to_angles(const Eigen::VectorXd& point) {
    const int d = static_cast<int>(point.size()) - 1;
    if (d < 1) throw std::invalid_argument("point needs at least two coordinates");
    std::vector<double> angles(static_cast<std::size_t>(d));
    // tail = |(x_k, ..., x_d)|, accumulated from the end to avoid cancellation.
    std::vector<double> tail(static_cast<std::size_t>(d) + 2, 0.0);
    for (int k = d; k >= 0; --k) tail[k] = std::hypot(tail[k + 1], point[k]);
    for (int k = 0; k < d; ++k) angles[k] = std::atan2(tail[k + 1], point[k]);
    return angles;
}

double orthant_area(int d) {
    std::vector<std::pair<double, double>> full(static_cast<std::size_t>(d), {0.0, kHalfPi});
    return box_area(full);
}

bool AngleBox::contains(const std::vector<double>& angles) const {
    for (std::size_t j = 0; j < ranges.size(); ++j) {
        if (angles[j] < ranges[j].first || angles[j] > ranges[j].second) return false;
    }
    return true;
}

double AngleBox::area() const { return box_area(ranges); }

double ClassConditional::density(const std::vector<double>& angles) const {
    double f = 0.0;
    for (std::size_t k = 0; k < boxes.size(); ++k) {
        if (boxes[k].contains(angles)) f += weights[k] / boxes[k].area();
    }
    return f;
}

ClassConditional ClassConditional::uniform(int d) {
    ClassConditional cc;
    cc.boxes.push_back({std::vector<std::pair<double, double>>(static_cast<std::size_t>(d), {0.0, kHalfPi})});
    cc.weights = {1.0};
    return cc;
}

void MixtureSpec::validate() const {
    if (d < 1 || d > 25) throw SpecInvalid("d must lie in 1..25");
    if (!(prior_p >= 0.0 && prior_p <= 1.0)) throw SpecInvalid("prior_p must lie in [0, 1]");
    validate_conditional(positive, d, "positive");
    validate_conditional(negative, d, "negative");
}

MixtureSpec two_cap_mixture(int d, double prior_p, bool informative, std::uint64_t seed) {
    MixtureSpec s;
    s.d = d;
    s.prior_p = prior_p;
    s.seed = seed;
    if (!informative) {
        s.positive = s.negative = ClassConditional::uniform(d);
        return s;
    }
    std::vector<std::pair<double, double>> a(static_cast<std::size_t>(d), {0.0, kHalfPi});
    std::vector<std::pair<double, double>> b = a;
    a[0] = {0.0, 1.0};
    b[0] = {0.6, kHalfPi};
    if (d >= 2) {
        a[1] = {0.0, 1.2};
        b[1] = {0.4, kHalfPi};
    }
    s.positive.boxes = {AngleBox{a}};
    s.positive.weights = {1.0};
    s.negative.boxes = {AngleBox{b}};
    s.negative.weights = {1.0};
    return s;
}

namespace {

nlohmann::json conditional_to_json(const ClassConditional& cc) {
    nlohmann::json boxes = nlohmann::json::array();
    for (std::size_t k = 0; k < cc.boxes.size(); ++k) {
        nlohmann::json ranges = nlohmann::json::array();
        for (const auto& [lo, hi] : cc.boxes[k].ranges) ranges.push_back({lo, hi});
        boxes.push_back({{"ranges", ranges}, {"weight", cc.weights[k]}});
    }
    return boxes;
}

ClassConditional conditional_from_json(const nlohmann::json& j) {
    ClassConditional cc;
    for (const auto& b : j) {
        for (const auto& [key, _] : b.items()) {
            if (key != "ranges" && key != "weight") throw SpecInvalid("unknown box key '" + key + "'");
        }
        AngleBox box;
        for (const auto& r : b.at("ranges")) box.ranges.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
        cc.boxes.push_back(std::move(box));
        cc.weights.push_back(b.value("weight", 1.0));
    }
    return cc;
}

}  // namespace

void to_json(nlohmann::json& j, const MixtureSpec& s) {
    j = nlohmann::json{{"d", s.d},
                       {"prior_p", s.prior_p},
                       {"positive", conditional_to_json(s.positive)},
                       {"negative", conditional_to_json(s.negative)},
                       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, MixtureSpec& s) {
    for (const auto& [key, _] : j.items()) {
        if (key != "d" && key != "prior_p" && key != "positive" && key != "negative" && key != "seed")
            throw SpecInvalid("unknown mixture key '" + key + "'");
    }
    s.d = j.at("d").get<int>();
    s.prior_p = j.at("prior_p").get<double>();
    s.positive = conditional_from_json(j.at("positive"));
    s.negative = conditional_from_json(j.at("negative"));
    s.seed = j.value("seed", std::uint64_t{0});
}

// ------------------------------------------------------------------ sampling

MixtureSample sample_mixture(const MixtureSpec& spec, int n, std::string_view stream) {
    spec.validate();
    if (n < 1) throw std::invalid_argument("sample_mixture needs n >= 1");
    const double sup_pos = density_sup(spec.positive, spec);
    const double sup_neg = density_sup(spec.negative, spec);

    Rng rng(spec.seed, stream);
    Eigen::MatrixXd X(n, spec.d + 1);
    std::vector<int> y(static_cast<std::size_t>(n));
    long proposals = 0;
    for (int i = 0; i < n; ++i) {
        y[i] = rng.uniform() < spec.prior_p ? 1 : -1;
        const ClassConditional& cc = y[i] == 1 ? spec.positive : spec.negative;
        const double sup = y[i] == 1 ? sup_pos : sup_neg;
        while (true) {
            ++proposals;
            const Eigen::VectorXd x = draw_orthant_point(rng, spec.d);
            const double f = cc.density(point_to_angles(x));
            if (f > sup * (1.0 + 1e-12)) throw SpecInvalid("density exceeds its rejection envelope");
            if (rng.uniform() * sup < f) {
                X.row(i) = x.transpose();
                break;
            }
        }
    }
    return {LabeledDataset(std::move(X), std::move(y)), static_cast<double>(n) / static_cast<double>(proposals)};
}

// --------------------------------------------------------------------- Bayes

int BayesOracle::decide(const Eigen::VectorXd& point) const {
    const auto angles = point_to_angles(point);
    const double s = spec.prior_p * spec.positive.density(angles) -
                     (1.0 - spec.prior_p) * spec.negative.density(angles);
    return s >= 0.0 ? 1 : -1;
}

double exact_bayes_risk(const MixtureSpec& spec) {
    spec.validate();
    double risk = 0.0;
    const bool ok = for_each_cell(spec, [&](const std::vector<double>& mid, const auto& ranges) {
        const double pos = spec.prior_p * spec.positive.density(mid);
        const double neg = (1.0 - spec.prior_p) * spec.negative.density(mid);
        risk += std::min(pos, neg) * box_area(ranges);
    });
    if (!ok) throw NumericalFailure("too many cells for the exact Bayes risk");
    return risk;
}

BayesOracle bayes_oracle(const MixtureSpec& spec, int mc_samples) {
    spec.validate();
    if (mc_samples < 2) throw std::invalid_argument("bayes_oracle needs at least two samples");
    BayesOracle o;
    o.spec = spec;
    o.exact_risk = exact_bayes_risk(spec);
    // Uniform importance sampling: risk = area * E_uniform[min(p f_1, (1 - p) f_-1)].
    Rng rng(spec.seed, "bayes_oracle");
    const double area = orthant_area(spec.d);
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < mc_samples; ++i) {
        const auto angles = point_to_angles(draw_orthant_point(rng, spec.d));
        const double v = area * std::min(spec.prior_p * spec.positive.density(angles),
                                         (1.0 - spec.prior_p) * spec.negative.density(angles));
        sum += v;
        sum2 += v * v;
    }
    const double m = static_cast<double>(mc_samples);
    o.risk = sum / m;
    o.risk_se = std::sqrt(std::max(0.0, sum2 / m - o.risk * o.risk) / (m - 1.0));
    return o;
}

double edge_distance(const MixtureSpec& spec, const Eigen::VectorXd& point) {
    const auto angles = point_to_angles(point);
    double best = std::numeric_limits<double>::infinity();
    for (const auto* cc : {&spec.positive, &spec.negative}) {
        for (const auto& box : cc->boxes) {
            for (std::size_t j = 0; j < box.ranges.size(); ++j) {
                for (double e : {box.ranges[j].first, box.ranges[j].second}) {
                    if (e > 0.0 && e < kHalfPi) best = std::min(best, std::abs(angles[j] - e));
                }
            }
        }
    }
    return best;
}

// ------------------------------------------------------------------------ IO

void write_dataset_csv(const std::string& path, const LabeledDataset& data) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    const int cols = data.ambient_dim();
    for (int k = 0; k < cols; ++k) out << 'x' << k << ',';
    out << "label\n" << std::setprecision(17);
    for (int i = 0; i < data.size(); ++i) {
        for (int k = 0; k < cols; ++k) out << data.points()(i, k) << ',';
        out << data.labels()[i] << '\n';
    }
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

LabeledDataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw MalformedDataset("missing header", -1);
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    const int cols = static_cast<int>(header.size()) - 1;
    if (cols < 2 || header.back() != "label") throw MalformedDataset("header must be x0,...,xd,label", -1);
    for (int k = 0; k < cols; ++k) {
        if (header[k] != "x" + std::to_string(k)) throw MalformedDataset("header must be x0,...,xd,label", -1);
    }

    std::vector<double> values;
    std::vector<int> labels;
    long row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int k = 0;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0') throw MalformedDataset("unparsable value '" + cell + "'", row);
            if (k < cols) {
                values.push_back(v);
            } else if (k == cols) {
                if (v != 1.0 && v != -1.0) throw MalformedDataset("label must be -1 or +1", row);
                labels.push_back(static_cast<int>(v));
            }
            ++k;
        }
        if (k != cols + 1) throw MalformedDataset("expected " + std::to_string(cols + 1) + " columns", row);
        ++row;
    }
    if (labels.empty()) throw MalformedDataset("dataset has no rows", 0);
    Eigen::MatrixXd X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), static_cast<Eigen::Index>(labels.size()), cols);
    return LabeledDataset(std::move(X), std::move(labels));
}

}  // namespace ntk
