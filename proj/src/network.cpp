#include "divreg/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "divreg/error.hpp"

namespace divreg {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "?";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::ReLU;
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw UnknownVariant("unknown activation \"" + name + "\"");
}

namespace {

double apply_activation(Activation a, double x) {
    switch (a) {
        case Activation::ReLU: return x > 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
        case Activation::Identity: return x;
    }
    return x;
}

/// Derivative in terms of pre-activation z and post-activation y.
double activation_derivative(Activation a, double z, double y) {
    switch (a) {
        case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: return 1.0 - y * y;
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

} // namespace

Mlp::Mlp(const std::vector<LayerSpec>& specs, Rng& rng) {
    if (specs.empty()) throw InvalidArgument("Mlp: need at least one layer");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].input_dim < 1 || specs[i].output_dim < 1)
            throw InvalidArgument("Mlp: layer dims must be >= 1");
        if (i > 0 && specs[i].input_dim != specs[i - 1].output_dim)
            throw DimensionMismatch("Mlp: layer " + std::to_string(i) + " input dim " +
                                    std::to_string(specs[i].input_dim) +
                                    " does not chain with previous output dim " +
                                    std::to_string(specs[i - 1].output_dim));
        Layer layer;
        layer.spec = specs[i];
        layer.weights = Matrix(specs[i].input_dim, specs[i].output_dim);
        layer.bias.assign(specs[i].output_dim, 0.0);
        const double fan_in = static_cast<double>(specs[i].input_dim);
        const double fan_out = static_cast<double>(specs[i].output_dim);
        const double limit = specs[i].activation == Activation::ReLU
                                 ? std::sqrt(6.0 / fan_in)
                                 : std::sqrt(6.0 / (fan_in + fan_out));
        for (double& w : layer.weights.data()) w = rng.uniform(-limit, limit);
        layers_.push_back(std::move(layer));
    }
}

Mlp Mlp::from_layers(std::vector<Layer> layers) {
    if (layers.empty()) throw InvalidArgument("Mlp: need at least one layer");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        if (l.weights.rows() != l.spec.input_dim || l.weights.cols() != l.spec.output_dim ||
            l.bias.size() != l.spec.output_dim)
            throw DimensionMismatch("Mlp: layer " + std::to_string(i) +
                                    " weights/bias do not match its spec");
        if (i > 0 && l.spec.input_dim != layers[i - 1].spec.output_dim)
            throw DimensionMismatch("Mlp: layer " + std::to_string(i) + " does not chain");
    }
    Mlp m;
    m.layers_ = std::move(layers);
    return m;
}

std::optional<std::size_t> Mlp::feature_layer() const {
    if (layers_.size() < 2) return std::nullopt;
    return layers_.size() - 2;
}

bool Mlp::all_finite() const {
    for (const Layer& l : layers_) {
        if (!l.weights.all_finite()) return false;
        for (double b : l.bias)
            if (!std::isfinite(b)) return false;
    }
    return true;
}

ActivationBatch ForwardTrace::feature_activations(const Mlp& model) const {
    auto idx = model.feature_layer();
    if (!idx)
        throw InvalidArgument("feature_activations: model has no hidden layer");
    return ActivationBatch(post[*idx]);
}

ForwardTrace forward(const Mlp& model, const Matrix& batch) {
    if (batch.cols() != model.input_dim())
        throw DimensionMismatch("forward: batch has " + std::to_string(batch.cols()) +
                                " columns, model expects " + std::to_string(model.input_dim()));
    ForwardTrace trace;
    trace.input = batch;
    const Matrix* current = &trace.input;
    for (std::size_t li = 0; li < model.num_layers(); ++li) {
        const Layer& layer = model.layer(li);
        Matrix z = matmul(*current, layer.weights);
        for (std::size_t i = 0; i < z.rows(); ++i) {
            double* row = z.row(i);
            for (std::size_t j = 0; j < z.cols(); ++j) row[j] += layer.bias[j];
        }
        Matrix a(z.rows(), z.cols());
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j)
                a(i, j) = apply_activation(layer.spec.activation, z(i, j));
        trace.pre.push_back(std::move(z));
        trace.post.push_back(std::move(a));
        current = &trace.post.back();
    }
    return trace;
}

std::pair<double, Matrix> cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    const std::size_t m = logits.rows();
    const std::size_t k = logits.cols();
    if (labels.size() != m)
        throw DimensionMismatch("cross_entropy: " + std::to_string(m) + " logit rows vs " +
                                std::to_string(labels.size()) + " labels");
    Matrix grad(m, k);
    double loss = 0.0;
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw LabelOutOfRange("cross_entropy: label " + std::to_string(y) + " at row " +
                                  std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
        const double* row = logits.row(i);
        double zmax = row[0];
        for (std::size_t j = 1; j < k; ++j) zmax = std::max(zmax, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - zmax);
        loss += std::log(denom) - (row[y] - zmax);
        for (std::size_t j = 0; j < k; ++j) {
            double p = std::exp(row[j] - zmax) / denom;
            grad(i, j) = (p - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) * inv_m;
        }
    }
    return {loss * inv_m, std::move(grad)};
}

Gradients backward(const Mlp& model, const ForwardTrace& trace, const Matrix& loss_grad,
                   const Matrix& reg_grad_feature) {
    const std::size_t nl = model.num_layers();
    if (trace.post.size() != nl || trace.pre.size() != nl)
        throw DimensionMismatch("backward: trace does not match model depth");
    if (!loss_grad.same_shape(trace.post.back()))
        throw DimensionMismatch("backward: loss_grad shape mismatch");
    auto feature_idx = model.feature_layer();
    if (!reg_grad_feature.empty()) {
        if (!feature_idx)
            throw InvalidArgument("backward: regularizer gradient given but model has no hidden layer");
        if (!reg_grad_feature.same_shape(trace.post[*feature_idx]))
            throw DimensionMismatch("backward: reg_grad_feature shape mismatch");
    }

    Gradients grads;
    grads.weights.resize(nl);
    grads.bias.resize(nl);

    Matrix upstream = loss_grad; // gradient w.r.t. post-activations of current layer
    for (std::size_t li = nl; li-- > 0;) {
        const Layer& layer = model.layer(li);
        if (!reg_grad_feature.empty() && feature_idx && li == *feature_idx)
            upstream += reg_grad_feature;

        // through the activation
        Matrix dz = upstream;
        const Matrix& z = trace.pre[li];
        const Matrix& y = trace.post[li];
        for (std::size_t i = 0; i < dz.rows(); ++i)
            for (std::size_t j = 0; j < dz.cols(); ++j)
                dz(i, j) *= activation_derivative(layer.spec.activation, z(i, j), y(i, j));

        const Matrix& below = li == 0 ? trace.input : trace.post[li - 1];
        grads.weights[li] = matmul(below.transposed(), dz);
        grads.bias[li].assign(layer.spec.output_dim, 0.0);
        for (std::size_t i = 0; i < dz.rows(); ++i)
            for (std::size_t j = 0; j < dz.cols(); ++j) grads.bias[li][j] += dz(i, j);

        if (li > 0) upstream = matmul(dz, layer.weights.transposed());
    }
    return grads;
}

double OptimizerState::effective_lr(std::size_t epoch) const {
    double lr = learning_rate;
    for (const ScheduleEntry& e : schedule)
        if (epoch >= e.epoch) lr *= e.multiplier;
    return lr;
}

void OptimizerState::validate() const {
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
}

void sgd_step(Mlp& model, const Gradients& grads, OptimizerState& opt, std::size_t epoch) {
    opt.validate();
    const std::size_t nl = model.num_layers();
    if (grads.weights.size() != nl || grads.bias.size() != nl)
        throw DimensionMismatch("sgd_step: gradients do not match model depth");
    if (opt.velocity_w.empty()) {
        opt.velocity_w.resize(nl);
        opt.velocity_b.resize(nl);
        for (std::size_t li = 0; li < nl; ++li) {
            opt.velocity_w[li] = Matrix(model.layer(li).weights.rows(), model.layer(li).weights.cols());
            opt.velocity_b[li].assign(model.layer(li).bias.size(), 0.0);
        }
    }

    const double lr = opt.effective_lr(epoch);
    for (std::size_t li = 0; li < nl; ++li) {
        Layer& layer = model.layer(li);
        Matrix& vw = opt.velocity_w[li];
        const Matrix& gw = grads.weights[li];
        if (!vw.same_shape(layer.weights) || !gw.same_shape(layer.weights))
            throw DimensionMismatch("sgd_step: weight gradient shape mismatch at layer " +
                                    std::to_string(li));
        for (std::size_t i = 0; i < vw.data().size(); ++i) {
            double g = gw.data()[i] + opt.weight_decay * layer.weights.data()[i];
            vw.data()[i] = opt.momentum * vw.data()[i] - lr * g;
            layer.weights.data()[i] += vw.data()[i];
        }
        auto& vb = opt.velocity_b[li];
        for (std::size_t j = 0; j < layer.bias.size(); ++j) {
            vb[j] = opt.momentum * vb[j] - lr * grads.bias[li][j]; // no decay on biases
            layer.bias[j] += vb[j];
        }
    }
    if (!model.all_finite()) throw NumericError("sgd_step: non-finite weights after update");
}

namespace {

std::size_t count_errors(const Matrix& logits, const std::vector<int>& labels) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* row = logits.row(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j)
            if (row[j] > row[best]) best = j;
        if (static_cast<int>(best) != labels[i]) ++wrong;
    }
    return wrong;
}

} // namespace

EpochMetrics train_epoch(Mlp& model, const Dataset& train, const RegularizerSpec& reg,
                         OptimizerState& opt, std::uint64_t run_seed, std::size_t epoch,
                         const TrainOptions& options) {
    if (train.size() == 0) throw InvalidArgument("train_epoch: empty dataset");
    reg.validate();
    auto feature_idx = model.feature_layer();
    if (!feature_idx && reg.variant != RegVariant::None)
        throw InvalidArgument("train_epoch: regularizer needs a hidden layer");

    EpochMetrics metrics;
    std::size_t seen = 0, wrong = 0;
    double j_direct_sum = 0.0;
    BatchStream stream(train, options.batch_size, run_seed, epoch);
    while (auto batch = stream.next()) {
        ForwardTrace trace = forward(model, batch->features);
        auto [ce, dlogits] = cross_entropy(trace.logits(), batch->labels);
        wrong += count_errors(trace.logits(), batch->labels);
        seen += batch->labels.size();

        RegularizerOutput reg_out;
        Matrix reg_grad; // empty when no regularizer
        if (feature_idx && (reg.variant != RegVariant::None || options.track_direct_diversity)) {
            ActivationBatch acts = trace.feature_activations(model);
            if (reg.variant != RegVariant::None) {
                reg_out = regularizer_loss(acts, reg);
                reg_grad = reg_out.grad_acts;
            }
            if (options.track_direct_diversity)
                j_direct_sum += j_direct(pairwise_similarity(acts, reg.gamma, reg.kernel())).value;
        }

        Gradients grads = backward(model, trace, dlogits, reg_grad);
        sgd_step(model, grads, opt, epoch);
        metrics.batches.push_back({ce, reg_out.loss, ce + reg_out.loss});
    }

    for (const BatchRecord& r : metrics.batches) {
        metrics.mean_ce += r.ce;
        metrics.mean_reg += r.reg;
        metrics.mean_aug += r.total;
    }
    const double nb = static_cast<double>(metrics.batches.size());
    metrics.mean_ce /= nb;
    metrics.mean_reg /= nb;
    metrics.mean_aug /= nb;
    metrics.train_error_pct = 100.0 * static_cast<double>(wrong) / static_cast<double>(seen);
    if (options.track_direct_diversity && feature_idx) metrics.mean_j_direct = j_direct_sum / nb;
    return metrics;
}

double evaluate_error_pct(const Mlp& model, const Dataset& ds, std::size_t eval_batch) {
    if (ds.size() == 0) throw InvalidArgument("evaluate_error_pct: empty dataset");
    std::size_t wrong = 0;
    for (std::size_t begin = 0; begin < ds.size(); begin += eval_batch) {
        const std::size_t take = std::min(eval_batch, ds.size() - begin);
        Matrix chunk(take, ds.dim());
        for (std::size_t i = 0; i < take; ++i) {
            const double* from = ds.features.row(begin + i);
            std::copy(from, from + ds.dim(), chunk.row(i));
        }
        ForwardTrace trace = forward(model, chunk);
        std::vector<int> labels(ds.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                                ds.labels.begin() + static_cast<std::ptrdiff_t>(begin + take));
        wrong += count_errors(trace.logits(), labels);
    }
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(ds.size());
}

} // namespace divreg
