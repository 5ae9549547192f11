#ifndef DIVREG_NETWORK_HPP
#define DIVREG_NETWORK_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "divreg/data.hpp"
#include "divreg/diversity.hpp"
#include "divreg/matrix.hpp"
#include "divreg/rng.hpp"

namespace divreg {

enum class Activation { ReLU, Tanh, Identity };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name); // throws UnknownVariant

struct LayerSpec {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    Activation activation = Activation::ReLU;
};

struct Layer {
    LayerSpec spec;
    Matrix weights; // input_dim x output_dim
    std::vector<double> bias;
};

/// Feedforward classifier. Layer i maps a_{i-1} (m x in) to
/// a_i = phi_i(a_{i-1} W_i + b_i). The feature layer is the last hidden
/// layer; its post-activation outputs feed the diversity regularizer.
class Mlp {
public:
    /// Seeded init: He-uniform for ReLU layers, Xavier-uniform otherwise;
    /// biases start at zero.
    Mlp(const std::vector<LayerSpec>& specs, Rng& rng);

    /// Assemble from explicit layers (tests, checkpoints).
    static Mlp from_layers(std::vector<Layer> layers);

    std::size_t num_layers() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return layers_[i]; }
    const Layer& layer(std::size_t i) const { return layers_[i]; }

    std::size_t input_dim() const { return layers_.front().spec.input_dim; }
    std::size_t output_dim() const { return layers_.back().spec.output_dim; }

    /// Index of the last hidden layer; nullopt for a single-layer model.
    std::optional<std::size_t> feature_layer() const;

    bool all_finite() const;

private:
    Mlp() = default;
    std::vector<Layer> layers_;
};

/// Per-layer pre- and post-activations for one batch.
struct ForwardTrace {
    Matrix input;
    std::vector<Matrix> pre;  // one per layer
    std::vector<Matrix> post; // one per layer

    const Matrix& logits() const { return post.back(); }

    /// Post-activation outputs of the feature layer.
    ActivationBatch feature_activations(const Mlp& model) const;
};

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> bias;
};

struct ScheduleEntry {
    std::size_t epoch = 0;  // applies from this epoch (0-based) onward
    double multiplier = 1.0;
};

/// SGD with momentum and weight decay plus a step learning-rate schedule.
/// Velocity buffers are created lazily on the first step.
struct OptimizerState {
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0001;
    std::vector<ScheduleEntry> schedule;

    std::vector<Matrix> velocity_w;
    std::vector<std::vector<double>> velocity_b;

    double effective_lr(std::size_t epoch) const;
    void validate() const;
};

ForwardTrace forward(const Mlp& model, const Matrix& batch);

/// Mean softmax cross-entropy over the batch; gradient (softmax - onehot)/m.
std::pair<double, Matrix> cross_entropy(const Matrix& logits, const std::vector<int>& labels);

/// Standard backprop. reg_grad_feature (when non-empty) is added to the
/// upstream gradient of the feature layer's post-activation values before
/// the pass continues downward -- the within-layer feedback joining the
/// between-layer feedback. Pass an empty Matrix for no regularizer.
Gradients backward(const Mlp& model, const ForwardTrace& trace, const Matrix& loss_grad,
                   const Matrix& reg_grad_feature);

/// v <- momentum * v - lr * (g + weight_decay * w); w <- w + v.
/// Biases are excluded from weight decay. Throws NumericError if an update
/// produces non-finite weights.
void sgd_step(Mlp& model, const Gradients& grads, OptimizerState& opt, std::size_t epoch);

struct BatchRecord {
    double ce = 0.0;
    double reg = 0.0;
    double total = 0.0;
};

struct EpochMetrics {
    double mean_ce = 0.0;
    double mean_reg = 0.0;
    double mean_aug = 0.0;
    double train_error_pct = 0.0; // running error over the epoch's batches
    std::optional<double> mean_j_direct;
    std::vector<BatchRecord> batches;
};

struct TrainOptions {
    std::size_t batch_size = 32;
    /// Track the epoch-mean direct-diversity value of the feature layer
    /// (diagnostic; costs one extra similarity pass per batch).
    bool track_direct_diversity = false;
};

/// One epoch: shuffled mini-batches; per batch the classification loss,
/// the regularization loss on the feature activations, combined backprop,
/// and an SGD step.
EpochMetrics train_epoch(Mlp& model, const Dataset& train, const RegularizerSpec& reg,
                         OptimizerState& opt, std::uint64_t run_seed, std::size_t epoch,
                         const TrainOptions& options = {});

/// Classification error in percent over a dataset (deterministic batching,
/// argmax ties resolved to the lowest index).
double evaluate_error_pct(const Mlp& model, const Dataset& ds, std::size_t eval_batch = 256);

} // namespace divreg

#endif // DIVREG_NETWORK_HPP
