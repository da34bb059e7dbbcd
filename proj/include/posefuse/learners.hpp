// Integration-level regressors for the stacking ensemble: ridge (closed
// form), random forest (CART with variance-reduction splits), and a small
// fully connected network trained by minibatch gradient descent with
// dropout and early stopping. All fits are deterministic functions of
// (inputs, seed).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "posefuse/error.hpp"
#include "posefuse/matrix.hpp"
#include "posefuse/rng.hpp"

namespace posefuse {

enum class LearnerKind : std::uint8_t { ridge = 0, random_forest = 1, mlp = 2 };

inline const char* learner_kind_name(LearnerKind k) {
    switch (k) {
        case LearnerKind::ridge: return "ridge";
        case LearnerKind::random_forest: return "random_forest";
        case LearnerKind::mlp: return "mlp";
    }
    return "?";
}

inline LearnerKind learner_kind_from_name(const std::string& name) {
    if (name == "ridge") return LearnerKind::ridge;
    if (name == "random_forest") return LearnerKind::random_forest;
    if (name == "mlp") return LearnerKind::mlp;
    throw Error(Errc::invalid_argument, "unknown learner kind '" + name + "'");
}

struct TrainConfig {
    double dropout_rate = 0.4;
    double learning_rate = 0.004;
    double decay = 0.0;  // L2 penalty: SGD weight decay, and the ridge lambda
    int epochs = 40;
    int batch_size = 200;
    double split_ratio = 0.8;
    int early_stop_patience = 5;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw Error(Errc::invalid_argument, "dropout_rate " + std::to_string(dropout_rate) + " outside [0,1)");
        if (!(learning_rate > 0.0))
            throw Error(Errc::invalid_argument, "learning_rate must be > 0");
        if (!(decay >= 0.0)) throw Error(Errc::invalid_argument, "decay must be >= 0");
        if (epochs < 1) throw Error(Errc::invalid_argument, "epochs must be >= 1");
        if (batch_size < 1) throw Error(Errc::invalid_argument, "batch_size must be >= 1");
        if (!(split_ratio > 0.0 && split_ratio < 1.0))
            throw Error(Errc::invalid_argument, "split_ratio " + std::to_string(split_ratio) + " outside (0,1)");
        if (early_stop_patience < 1) throw Error(Errc::invalid_argument, "early_stop_patience must be >= 1");
    }
};

struct RidgeModel {
    Matrix coef;                     // feature_dim x target_dim
    std::vector<double> intercept;   // target_dim
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> value;  // leaf mean, target_dim

    bool leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct ForestModel {
    std::vector<DecisionTree> trees;
};

struct ForestConfig {
    int trees = 100;
    int max_depth = 8;
    int min_leaf = 2;
    std::uint64_t seed = 0;
    bool bootstrap = true;  // false fits each tree on the rows as-is
};

struct MlpModel {
    std::vector<Matrix> weights;              // weights[l]: fan_in x fan_out
    std::vector<std::vector<double>> biases;  // biases[l]: fan_out

    std::size_t layer_count() const { return weights.size(); }
};

struct MetaLearner {
    LearnerKind kind = LearnerKind::ridge;
    std::size_t feature_dim = 0;
    std::size_t target_dim = 0;
    // Group-encoding layout, populated when trained through the stacking
    // pipeline; empty for learners fitted on raw matrices.
    std::vector<std::string> layout_model_ids;
    int layout_keypoint_count = 0;

    RidgeModel ridge;
    ForestModel forest;
    MlpModel mlp;
};

struct FitReport {
    std::vector<double> val_loss_per_epoch;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
};

namespace detail {

inline void require_same_rows(const Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows())
        throw Error(Errc::length_mismatch,
                    std::to_string(x.rows()) + " feature rows vs " + std::to_string(y.rows()) + " target rows");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ridge regression: (Xc^T Xc + lambda I) W = Xc^T Yc on column-centered data,
// intercept recovered from the column means.
// ---------------------------------------------------------------------------

inline MetaLearner ridge_fit(const Matrix& x, const Matrix& y, double lambda) {
    detail::require_same_rows(x, y);
    if (x.rows() < 1) throw Error(Errc::empty_input, "ridge fit on zero rows");
    if (!(lambda >= 0.0)) throw Error(Errc::invalid_argument, "lambda must be >= 0");
    if (!x.finite() || !y.finite()) throw Error(Errc::non_finite_input, "ridge fit on non-finite data");

    const std::size_t n = x.rows(), d = x.cols(), t = y.cols();
    std::vector<double> xmean(d, 0.0), ymean(t, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) xmean[c] += x(r, c);
        for (std::size_t c = 0; c < t; ++c) ymean[c] += y(r, c);
    }
    for (double& v : xmean) v /= static_cast<double>(n);
    for (double& v : ymean) v /= static_cast<double>(n);

    Matrix xc(n, d), yc(n, t);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) xc(r, c) = x(r, c) - xmean[c];
        for (std::size_t c = 0; c < t; ++c) yc(r, c) = y(r, c) - ymean[c];
    }

    Matrix gram = matmul(xc.transpose(), xc);
    for (std::size_t i = 0; i < d; ++i) gram(i, i) += lambda;
    const Matrix rhs = matmul(xc.transpose(), yc);
    Matrix coef;
    try {
        coef = cholesky_solve(gram, rhs);
    } catch (const Error& e) {
        if (e.code() == Errc::singular_system)
            throw Error(Errc::singular_system, "ridge normal equations singular (lambda=" +
                                                   std::to_string(lambda) + "); " + e.what());
        throw;
    }

    MetaLearner model;
    model.kind = LearnerKind::ridge;
    model.feature_dim = d;
    model.target_dim = t;
    model.ridge.coef = std::move(coef);
    model.ridge.intercept.assign(t, 0.0);
    for (std::size_t c = 0; c < t; ++c) {
        double b = ymean[c];
        for (std::size_t f = 0; f < d; ++f) b -= xmean[f] * model.ridge.coef(f, c);
        model.ridge.intercept[c] = b;
    }
    return model;
}

// ---------------------------------------------------------------------------
// Random forest regression.
// ---------------------------------------------------------------------------

namespace detail {

struct TreeBuilder {
    const Matrix& x;
    const Matrix& y;
    int max_depth;
    int min_leaf;
    Rng& rng;
    DecisionTree tree;

    std::vector<double> mean_of(const std::vector<int>& rows) const {
        std::vector<double> m(y.cols(), 0.0);
        for (int r : rows)
            for (std::size_t c = 0; c < y.cols(); ++c) m[c] += y(static_cast<std::size_t>(r), c);
        for (double& v : m) v /= static_cast<double>(rows.size());
        return m;
    }

    double sse_of(const std::vector<int>& rows, const std::vector<double>& mean) const {
        double sse = 0.0;
        for (int r : rows)
            for (std::size_t c = 0; c < y.cols(); ++c) {
                const double d = y(static_cast<std::size_t>(r), c) - mean[c];
                sse += d * d;
            }
        return sse;
    }

    int build(std::vector<int> rows, int depth) {
        const int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        std::vector<double> mean = mean_of(rows);
        const double node_sse = sse_of(rows, mean);
        tree.nodes[static_cast<std::size_t>(node_id)].value = mean;

        if (depth >= max_depth || static_cast<int>(rows.size()) < 2 * min_leaf || node_sse <= 1e-12)
            return node_id;

        // Candidate features: a sqrt(d)-sized random subset, no replacement.
        const std::size_t d = x.cols();
        std::vector<int> features(d);
        std::iota(features.begin(), features.end(), 0);
        const std::size_t mtry = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d)))));
        for (std::size_t i = 0; i < mtry; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.bounded(static_cast<std::uint64_t>(d - i)));
            std::swap(features[i], features[j]);
        }

        int best_feature = -1;
        double best_threshold = 0.0, best_score = node_sse - 1e-12;
        std::vector<int> order(rows.size());
        const std::size_t t = y.cols();
        std::vector<double> prefix_sum(t), total_sum(t);
        for (std::size_t fi = 0; fi < mtry; ++fi) {
            const int f = features[fi];
            order = rows;
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                const double va = x(static_cast<std::size_t>(a), static_cast<std::size_t>(f));
                const double vb = x(static_cast<std::size_t>(b), static_cast<std::size_t>(f));
                return va < vb || (va == vb && a < b);
            });

            std::fill(total_sum.begin(), total_sum.end(), 0.0);
            double total_sq = 0.0;
            for (int r : order)
                for (std::size_t c = 0; c < t; ++c) {
                    const double v = y(static_cast<std::size_t>(r), c);
                    total_sum[c] += v;
                    total_sq += v * v;
                }

            std::fill(prefix_sum.begin(), prefix_sum.end(), 0.0);
            double prefix_sq = 0.0;
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                const int r = order[i];
                for (std::size_t c = 0; c < t; ++c) {
                    const double v = y(static_cast<std::size_t>(r), c);
                    prefix_sum[c] += v;
                    prefix_sq += v * v;
                }
                const double a = x(static_cast<std::size_t>(r), static_cast<std::size_t>(f));
                const double b = x(static_cast<std::size_t>(order[i + 1]), static_cast<std::size_t>(f));
                if (!(b > a)) continue;
                const std::size_t nl = i + 1, nr = order.size() - nl;
                if (nl < static_cast<std::size_t>(min_leaf) || nr < static_cast<std::size_t>(min_leaf)) continue;
                // SSE = sum(v^2) - ||sum(v)||^2 / n, per side.
                double left_dot = 0.0, right_dot = 0.0;
                for (std::size_t c = 0; c < t; ++c) {
                    left_dot += prefix_sum[c] * prefix_sum[c];
                    const double rs = total_sum[c] - prefix_sum[c];
                    right_dot += rs * rs;
                }
                const double score = (prefix_sq - left_dot / static_cast<double>(nl)) +
                                     ((total_sq - prefix_sq) - right_dot / static_cast<double>(nr));
                if (score < best_score) {
                    const double mid = a + (b - a) / 2.0;
                    if (!(mid > a) || !(mid <= b)) continue;  // unrepresentable gap
                    best_score = score;
                    best_feature = f;
                    best_threshold = mid;
                }
            }
        }

        if (best_feature < 0) return node_id;

        std::vector<int> left_rows, right_rows;
        for (int r : rows) {
            if (x(static_cast<std::size_t>(r), static_cast<std::size_t>(best_feature)) < best_threshold)
                left_rows.push_back(r);
            else
                right_rows.push_back(r);
        }
        if (left_rows.empty() || right_rows.empty()) return node_id;

        tree.nodes[static_cast<std::size_t>(node_id)].feature = best_feature;
        tree.nodes[static_cast<std::size_t>(node_id)].threshold = best_threshold;
        const int left_id = build(std::move(left_rows), depth + 1);
        tree.nodes[static_cast<std::size_t>(node_id)].left = left_id;
        const int right_id = build(std::move(right_rows), depth + 1);
        tree.nodes[static_cast<std::size_t>(node_id)].right = right_id;
        return node_id;
    }
};

inline void tree_predict_into(const DecisionTree& tree, const std::vector<double>& row, std::vector<double>& out) {
    int node = 0;
    while (!tree.nodes[static_cast<std::size_t>(node)].leaf()) {
        const TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
        node = row[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
    }
    const std::vector<double>& v = tree.nodes[static_cast<std::size_t>(node)].value;
    for (std::size_t c = 0; c < v.size(); ++c) out[c] += v[c];
}

}  // namespace detail

inline MetaLearner random_forest_fit(const Matrix& x, const Matrix& y, const ForestConfig& cfg = {}) {
    detail::require_same_rows(x, y);
    if (x.rows() < 2) throw Error(Errc::insufficient_rows, "random forest needs >= 2 rows");
    if (cfg.trees < 1 || cfg.max_depth < 1 || cfg.min_leaf < 1)
        throw Error(Errc::invalid_argument, "forest config values must be >= 1");
    if (!x.finite() || !y.finite()) throw Error(Errc::non_finite_input, "forest fit on non-finite data");

    MetaLearner model;
    model.kind = LearnerKind::random_forest;
    model.feature_dim = x.cols();
    model.target_dim = y.cols();
    model.forest.trees.reserve(static_cast<std::size_t>(cfg.trees));

    const int n = static_cast<int>(x.rows());
    for (int ti = 0; ti < cfg.trees; ++ti) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(ti)));
        std::vector<int> rows(static_cast<std::size_t>(n));
        if (cfg.bootstrap) {
            for (int i = 0; i < n; ++i)
                rows[static_cast<std::size_t>(i)] = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n)));
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        detail::TreeBuilder builder{x, y, cfg.max_depth, cfg.min_leaf, rng, {}};
        builder.build(std::move(rows), 0);
        model.forest.trees.push_back(std::move(builder.tree));
    }
    return model;
}

// ---------------------------------------------------------------------------
// Multilayer perceptron: ReLU hidden layers, linear output, squared-error
// loss L = (1/2n) sum ||f(x) - y||^2.
// ---------------------------------------------------------------------------

namespace detail {

// Forward pass over a row batch; activations[l] holds layer l's output
// (activations[0] = input). Dropout masks, when provided, are applied to
// hidden activations (inverted scaling already folded in).
inline void mlp_forward(const MlpModel& net, const Matrix& x, const std::vector<int>& rows,
                        const std::vector<Matrix>* dropout, std::vector<Matrix>& activations) {
    const std::size_t batch = rows.size();
    const std::size_t layers = net.layer_count();
    activations.assign(layers + 1, Matrix());
    activations[0] = Matrix(batch, x.cols());
    for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < x.cols(); ++c)
            activations[0](r, c) = x(static_cast<std::size_t>(rows[r]), c);

    for (std::size_t l = 0; l < layers; ++l) {
        const Matrix& w = net.weights[l];
        Matrix z = matmul(activations[l], w);
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < w.cols(); ++c) z(r, c) += net.biases[l][c];
        if (l + 1 < layers) {
            for (double& v : z.data()) v = v > 0.0 ? v : 0.0;  // ReLU
            if (dropout)
                for (std::size_t r = 0; r < batch; ++r)
                    for (std::size_t c = 0; c < w.cols(); ++c) z(r, c) *= (*dropout)[l](r, c);
        }
        activations[l + 1] = std::move(z);
    }
}

}  // namespace detail

// Mean squared-error loss (1/2n scaling), dropout off. Paired with
// mlp_gradients for finite-difference verification.
inline double mlp_loss(const MlpModel& net, const Matrix& x, const Matrix& y) {
    detail::require_same_rows(x, y);
    std::vector<int> rows(x.rows());
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<Matrix> acts;
    detail::mlp_forward(net, x, rows, nullptr, acts);
    const Matrix& pred = acts.back();
    double loss = 0.0;
    for (std::size_t r = 0; r < y.rows(); ++r)
        for (std::size_t c = 0; c < y.cols(); ++c) {
            const double d = pred(r, c) - y(r, c);
            loss += d * d;
        }
    return loss / (2.0 * static_cast<double>(x.rows()));
}

// Analytic gradients of mlp_loss by backpropagation. `grads` is returned
// with the same shapes as `net`. Optional dropout masks make the gradient
// match the masked forward pass used in training.
inline void mlp_gradients(const MlpModel& net, const Matrix& x, const Matrix& y, MlpModel& grads,
                          const std::vector<Matrix>* dropout = nullptr,
                          const std::vector<int>* row_subset = nullptr) {
    std::vector<int> rows;
    if (row_subset) {
        rows = *row_subset;
    } else {
        detail::require_same_rows(x, y);
        rows.resize(x.rows());
        std::iota(rows.begin(), rows.end(), 0);
    }
    const std::size_t batch = rows.size();
    const std::size_t layers = net.layer_count();

    std::vector<Matrix> acts;
    detail::mlp_forward(net, x, rows, dropout, acts);

    grads.weights.assign(layers, Matrix());
    grads.biases.assign(layers, {});
    for (std::size_t l = 0; l < layers; ++l) {
        grads.weights[l] = Matrix(net.weights[l].rows(), net.weights[l].cols());
        grads.biases[l].assign(net.biases[l].size(), 0.0);
    }

    // delta at the output: (pred - y) / n
    Matrix delta(batch, net.weights.back().cols());
    for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < delta.cols(); ++c)
            delta(r, c) = (acts[layers](r, c) - y(static_cast<std::size_t>(rows[r]), c)) / static_cast<double>(batch);

    for (std::size_t l = layers; l-- > 0;) {
        grads.weights[l] = matmul(acts[l].transpose(), delta);
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < delta.cols(); ++c) grads.biases[l][c] += delta(r, c);
        if (l == 0) break;
        Matrix prev = matmul(delta, net.weights[l].transpose());
        // Through dropout and ReLU: the stored activation is already masked,
        // so its positivity marks surviving ReLU-active units.
        for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < prev.cols(); ++c) {
                if (acts[l](r, c) <= 0.0) {
                    prev(r, c) = 0.0;
                } else if (dropout) {
                    prev(r, c) *= (*dropout)[l - 1](r, c);
                }
            }
        delta = std::move(prev);
    }
}

inline MetaLearner mlp_fit(const Matrix& x, const Matrix& y, const TrainConfig& cfg,
                           const std::vector<std::size_t>& hidden = {64, 64}, const Matrix* x_val = nullptr,
                           const Matrix* y_val = nullptr, FitReport* report = nullptr) {
    cfg.validate();
    detail::require_same_rows(x, y);
    if (x.rows() < 1) throw Error(Errc::empty_input, "mlp fit on zero rows");
    if (!x.finite() || !y.finite()) throw Error(Errc::non_finite_input, "mlp fit on non-finite data");
    if ((x_val == nullptr) != (y_val == nullptr))
        throw Error(Errc::invalid_argument, "validation features and targets must come together");

    Rng rng(derive_seed(cfg.seed, 0x6d6c70));  // one stream drives init, shuffling and dropout

    // Validation set: explicit when given, else carved from the rows by a
    // seeded shuffle at split_ratio.
    std::vector<int> train_rows(x.rows());
    std::iota(train_rows.begin(), train_rows.end(), 0);
    Matrix val_x, val_y;
    bool have_val = false;
    if (x_val) {
        detail::require_same_rows(*x_val, *y_val);
        if (x_val->rows() > 0 && (x_val->cols() != x.cols() || y_val->cols() != y.cols()))
            throw Error(Errc::dimension_mismatch, "validation set shape differs from training set");
        val_x = *x_val;
        val_y = *y_val;
        have_val = val_x.rows() > 0;
    } else if (x.rows() >= 2) {
        rng.shuffle(train_rows);
        const std::size_t n_train = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::floor(static_cast<double>(x.rows()) * cfg.split_ratio)), 1, x.rows() - 1);
        val_x = Matrix(x.rows() - n_train, x.cols());
        val_y = Matrix(x.rows() - n_train, y.cols());
        for (std::size_t i = n_train; i < train_rows.size(); ++i) {
            for (std::size_t c = 0; c < x.cols(); ++c)
                val_x(i - n_train, c) = x(static_cast<std::size_t>(train_rows[i]), c);
            for (std::size_t c = 0; c < y.cols(); ++c)
                val_y(i - n_train, c) = y(static_cast<std::size_t>(train_rows[i]), c);
        }
        train_rows.resize(n_train);
        have_val = true;
    }

    MetaLearner model;
    model.kind = LearnerKind::mlp;
    model.feature_dim = x.cols();
    model.target_dim = y.cols();

    std::vector<std::size_t> widths;
    widths.push_back(x.cols());
    for (std::size_t h : hidden) {
        if (h < 1) throw Error(Errc::invalid_argument, "hidden layer width must be >= 1");
        widths.push_back(h);
    }
    widths.push_back(y.cols());

    MlpModel& net = model.mlp;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        Matrix w(widths[l], widths[l + 1]);
        const double scale = std::sqrt(2.0 / static_cast<double>(widths[l]));
        for (double& v : w.data()) v = rng.gaussian() * scale;
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(widths[l + 1], 0.0);
    }

    const std::size_t n_train = train_rows.size();
    const std::size_t batch_size = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n_train);
    const std::size_t layers = net.layer_count();

    FitReport local_report;
    FitReport& rep = report ? *report : local_report;
    rep = FitReport{};

    MlpModel best = net;
    int stale_epochs = 0;
    MlpModel grads;
    std::vector<Matrix> dropout_masks(layers >= 1 ? layers - 1 : 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(train_rows);
        for (std::size_t start = 0; start < n_train; start += batch_size) {
            const std::size_t stop = std::min(n_train, start + batch_size);
            std::vector<int> batch(train_rows.begin() + static_cast<std::ptrdiff_t>(start),
                                   train_rows.begin() + static_cast<std::ptrdiff_t>(stop));

            const std::vector<Matrix>* masks = nullptr;
            if (cfg.dropout_rate > 0.0 && layers >= 2) {
                const double keep = 1.0 - cfg.dropout_rate;
                for (std::size_t l = 0; l + 1 < layers; ++l) {
                    dropout_masks[l] = Matrix(batch.size(), net.weights[l].cols());
                    for (double& v : dropout_masks[l].data()) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
                }
                masks = &dropout_masks;
            }

            mlp_gradients(net, x, y, grads, masks, &batch);
            for (std::size_t l = 0; l < layers; ++l) {
                double* w = net.weights[l].data().data();
                const double* g = grads.weights[l].data().data();
                const std::size_t cnt = net.weights[l].data().size();
                for (std::size_t i = 0; i < cnt; ++i) w[i] -= cfg.learning_rate * (g[i] + cfg.decay * w[i]);
                for (std::size_t i = 0; i < net.biases[l].size(); ++i)
                    net.biases[l][i] -= cfg.learning_rate * grads.biases[l][i];
            }
        }

        double monitored;
        if (have_val) {
            monitored = mlp_loss(net, val_x, val_y);
        } else {
            // No validation rows: monitor the training loss instead.
            Matrix tx(n_train, x.cols()), ty(n_train, y.cols());
            for (std::size_t i = 0; i < n_train; ++i) {
                for (std::size_t c = 0; c < x.cols(); ++c) tx(i, c) = x(static_cast<std::size_t>(train_rows[i]), c);
                for (std::size_t c = 0; c < y.cols(); ++c) ty(i, c) = y(static_cast<std::size_t>(train_rows[i]), c);
            }
            monitored = mlp_loss(net, tx, ty);
        }
        if (!std::isfinite(monitored))
            throw Error(Errc::non_finite_loss, "loss diverged at epoch " + std::to_string(epoch));
        rep.val_loss_per_epoch.push_back(monitored);
        rep.epochs_run = static_cast<std::size_t>(epoch) + 1;

        if (monitored < rep.best_val_loss) {
            rep.best_val_loss = monitored;
            rep.best_epoch = static_cast<std::size_t>(epoch);
            best = net;
            stale_epochs = 0;
        } else if (++stale_epochs >= cfg.early_stop_patience) {
            break;
        }
    }

    model.mlp = std::move(best);
    return model;
}

// ---------------------------------------------------------------------------
// Prediction.
// ---------------------------------------------------------------------------

inline std::vector<double> learner_predict(const MetaLearner& model, const std::vector<double>& row) {
    if (row.size() != model.feature_dim)
        throw Error(Errc::dimension_mismatch, "feature row of length " + std::to_string(row.size()) +
                                                  " fed to a model expecting " + std::to_string(model.feature_dim));
    std::vector<double> out(model.target_dim, 0.0);
    switch (model.kind) {
        case LearnerKind::ridge: {
            for (std::size_t c = 0; c < model.target_dim; ++c) out[c] = model.ridge.intercept[c];
            for (std::size_t f = 0; f < model.feature_dim; ++f) {
                const double v = row[f];
                if (v == 0.0) continue;
                for (std::size_t c = 0; c < model.target_dim; ++c) out[c] += v * model.ridge.coef(f, c);
            }
            break;
        }
        case LearnerKind::random_forest: {
            for (const DecisionTree& tree : model.forest.trees) detail::tree_predict_into(tree, row, out);
            for (double& v : out) v /= static_cast<double>(model.forest.trees.size());
            break;
        }
        case LearnerKind::mlp: {
            Matrix input(1, model.feature_dim);
            for (std::size_t c = 0; c < model.feature_dim; ++c) input(0, c) = row[c];
            std::vector<int> rows{0};
            std::vector<Matrix> acts;
            detail::mlp_forward(model.mlp, input, rows, nullptr, acts);
            for (std::size_t c = 0; c < model.target_dim; ++c) out[c] = acts.back()(0, c);
            break;
        }
    }
    return out;
}

inline Matrix learner_predict_matrix(const MetaLearner& model, const Matrix& x) {
    Matrix out(x.rows(), model.target_dim);
    std::vector<double> row(x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) row[c] = x(r, c);
        const std::vector<double> pred = learner_predict(model, row);
        for (std::size_t c = 0; c < model.target_dim; ++c) out(r, c) = pred[c];
    }
    return out;
}

// Mean squared error between a model's predictions and targets, averaged
// over rows and target columns.
inline double mean_squared_error(const Matrix& pred, const Matrix& target) {
    detail::require_same_rows(pred, target);
    if (pred.cols() != target.cols()) throw Error(Errc::dimension_mismatch, "MSE column mismatch");
    if (pred.rows() == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t r = 0; r < pred.rows(); ++r)
        for (std::size_t c = 0; c < pred.cols(); ++c) {
            const double d = pred(r, c) - target(r, c);
            sum += d * d;
        }
    return sum / (static_cast<double>(pred.rows()) * static_cast<double>(pred.cols()));
}

}  // namespace posefuse
