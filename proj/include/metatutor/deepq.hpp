#pragma once
// Multilayer perceptron with hand-rolled backpropagation and the offline
// double-Q trainer on top of it. The main network selects the successor
// action, the periodically synchronized target network evaluates it, which
// keeps value estimates from inflating the way a single-network max does.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metatutor/config.hpp"
#include "metatutor/domain.hpp"
#include "metatutor/rng.hpp"

namespace metatutor::deepq {

// Fully connected net: rectifier hidden units, linear output.
struct Mlp {
    std::vector<std::size_t> sizes;               // [in, hidden..., out]
    std::vector<std::vector<double>> weights;     // per layer, out x in row-major
    std::vector<std::vector<double>> biases;      // per layer, out

    static Mlp zeros(std::vector<std::size_t> sizes);
    // He-style scaled uniform init, bound sqrt(6 / fan_in), zero biases.
    static Mlp random_init(std::vector<std::size_t> sizes, Rng& rng);

    std::size_t input_dim() const { return sizes.front(); }
    std::size_t output_dim() const { return sizes.back(); }
    std::size_t layer_count() const { return weights.size(); }
    std::size_t parameter_count() const;

    std::vector<double> forward(std::span<const double> x) const;

    bool operator==(const Mlp&) const = default;
};

// Per-layer gradients, same shapes as the net parameters.
struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    static Gradients zeros_like(const Mlp& net);
    double max_abs() const;
};

// One training example: the Q-value of `action` at `state` regresses onto
// `target`.
struct QExample {
    std::vector<double> state;
    int action = 0;
    double target = 0.0;
};

// Mean squared error over the batch plus analytic gradients.
double loss_and_gradients(const Mlp& net, std::span<const QExample> batch,
                          Gradients& out_grads);
double batch_loss(const Mlp& net, std::span<const QExample> batch);

// Max relative error between analytic and central-finite-difference gradients
// (h = 1e-5) over every parameter: |ga - gn| / max(1e-8, |ga| + |gn|).
double grad_check(const Mlp& net, std::span<const QExample> batch);

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
    double learning_rate = 1e-3;
    double gamma = 0.9;
    int batch_size = 32;
    int sync_every = 4;  // gradient updates between hard target copies
    int epochs = 2000;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::vector<std::size_t> hidden_sizes{16, 16};
    double split_fraction = 0.8;  // by-student train/holdout split
    bool mask_successor_slots = true;  // restrict successor argmax like deployment
    std::vector<int> we_positions;     // slots forced to NoIntervention

    void validate() const;
    static TrainConfig from_config(const KeyValueConfig& cfg);
};

// Deployable policy: main network plus the feature standardization fitted on
// the training split (sd clamped to >= 1e-8).
struct Policy {
    Mlp net;
    std::vector<double> mean;
    std::vector<double> sd;

    std::vector<double> standardize(const FeatureVector& raw) const;
    std::array<double, 3> q_values(const FeatureVector& raw) const;
};

// r for terminal records, else r + gamma * Q_target(s', argmax_a Q_main(s', a)).
// Ties in the argmax break toward the lowest action code; the mask removes
// successor actions the deployment slot would forbid.
double ddqn_target(const TransitionRecord& record,
                   const std::optional<FeatureVector>& successor, const Mlp& main,
                   const Mlp& target, double gamma,
                   const std::array<bool, 3>& successor_mask = {true, true, true});

InterventionAction select_action(const Policy& policy, const FeatureVector& state,
                                 const std::array<bool, 3>& mask);

// Standardized view of a TransitionRecord, ready for the trainer.
struct Transition {
    std::vector<double> state;
    int action = 0;
    double reward = 0.0;
    bool done = false;
    std::optional<std::vector<double>> next_state;
    std::array<bool, 3> next_mask{true, true, true};
};

class DdqnTrainer {
public:
    DdqnTrainer(const TrainConfig& config, std::size_t feature_dim, Rng& init_rng);

    // Computes the double-Q targets with the current networks, applies one
    // gradient update to the main network, and hard-copies it into the target
    // network every sync_every updates. Returns the batch MSE.
    double train_step(std::span<const Transition> batch);

    double evaluate(std::span<const Transition> transitions) const;

    const Mlp& main_net() const { return main_; }
    const Mlp& target_net() const { return target_; }
    std::uint64_t update_count() const { return update_count_; }

private:
    TrainConfig config_;
    Mlp main_;
    Mlp target_;
    Gradients grads_;
    Gradients adam_m_;
    Gradients adam_v_;
    std::uint64_t update_count_ = 0;
    std::uint64_t adam_t_ = 0;
};

struct TrainResult {
    Policy policy;        // after the full epoch budget
    Policy best_policy;   // lowest held-out MSE checkpoint
    std::size_t best_epoch = 0;
    std::vector<double> train_mse;
    std::vector<double> test_mse;  // empty when the holdout side is empty
};

TrainResult train(const ReplayCorpus& corpus, const TrainConfig& config);

void save_policy(const Policy& policy, std::ostream& out);
Policy load_policy(std::istream& in);
void save_policy_file(const Policy& policy, const std::string& path);
Policy load_policy_file(const std::string& path);

}  // namespace metatutor::deepq
