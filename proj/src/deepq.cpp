#include "metatutor/deepq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include "metatutor/textio.hpp"

namespace metatutor::deepq {

namespace {

void check_sizes(const std::vector<std::size_t>& sizes) {
    if (sizes.size() < 2) throw ValidationError("mlp needs at least input and output");
    for (std::size_t s : sizes)
        if (s == 0) throw ValidationError("mlp layer size must be positive");
}

}  // namespace

Mlp Mlp::zeros(std::vector<std::size_t> sizes) {
    check_sizes(sizes);
    Mlp net;
    net.sizes = std::move(sizes);
    for (std::size_t l = 0; l + 1 < net.sizes.size(); ++l) {
        net.weights.emplace_back(net.sizes[l + 1] * net.sizes[l], 0.0);
        net.biases.emplace_back(net.sizes[l + 1], 0.0);
    }
    return net;
}

Mlp Mlp::random_init(std::vector<std::size_t> sizes, Rng& rng) {
    Mlp net = zeros(std::move(sizes));
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const double bound = std::sqrt(6.0 / double(net.sizes[l]));
        for (double& w : net.weights[l]) w = rng.uniform(-bound, bound);
    }
    return net;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer_count(); ++l)
        n += weights[l].size() + biases[l].size();
    return n;
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
    if (x.size() != input_dim())
        throw ValidationError("mlp forward: input dimension mismatch (got " +
                              std::to_string(x.size()) + ", expected " +
                              std::to_string(input_dim()) + ")");
    std::vector<double> act(x.begin(), x.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const std::size_t in = sizes[l], out = sizes[l + 1];
        next.assign(out, 0.0);
        const double* w = weights[l].data();
        for (std::size_t o = 0; o < out; ++o) {
            double z = biases[l][o];
            const double* row = w + o * in;
            for (std::size_t i = 0; i < in; ++i) z += row[i] * act[i];
            next[o] = (l + 1 < layer_count() && z < 0.0) ? 0.0 : z;  // hidden relu
        }
        act.swap(next);
    }
    return act;
}

Gradients Gradients::zeros_like(const Mlp& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        g.weights.emplace_back(net.weights[l].size(), 0.0);
        g.biases.emplace_back(net.biases[l].size(), 0.0);
    }
    return g;
}

double Gradients::max_abs() const {
    double m = 0.0;
    for (const auto& v : weights)
        for (double g : v) m = std::max(m, std::fabs(g));
    for (const auto& v : biases)
        for (double g : v) m = std::max(m, std::fabs(g));
    return m;
}

namespace {

// Forward pass keeping every layer's activations for the backward sweep.
void forward_cached(const Mlp& net, std::span<const double> x,
                    std::vector<std::vector<double>>& acts) {
    acts.resize(net.layer_count() + 1);
    acts[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const std::size_t in = net.sizes[l], out = net.sizes[l + 1];
        acts[l + 1].assign(out, 0.0);
        const double* w = net.weights[l].data();
        for (std::size_t o = 0; o < out; ++o) {
            double z = net.biases[l][o];
            const double* row = w + o * in;
            for (std::size_t i = 0; i < in; ++i) z += row[i] * acts[l][i];
            acts[l + 1][o] = (l + 1 < net.layer_count() && z < 0.0) ? 0.0 : z;
        }
    }
}

}  // namespace

double loss_and_gradients(const Mlp& net, std::span<const QExample> batch,
                          Gradients& out_grads) {
    if (batch.empty()) throw ValidationError("empty minibatch");
    for (auto& v : out_grads.weights) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : out_grads.biases) std::fill(v.begin(), v.end(), 0.0);

    const double inv_n = 1.0 / double(batch.size());
    double loss = 0.0;
    std::vector<std::vector<double>> acts;
    std::vector<double> delta, delta_prev;

    for (const QExample& ex : batch) {
        if (ex.action < 0 || std::size_t(ex.action) >= net.output_dim())
            throw ValidationError("action index out of range");
        forward_cached(net, ex.state, acts);
        const double q = acts.back()[std::size_t(ex.action)];
        const double diff = q - ex.target;
        loss += diff * diff;

        // output layer: loss feeds only the taken action's unit
        delta.assign(net.output_dim(), 0.0);
        delta[std::size_t(ex.action)] = 2.0 * diff * inv_n;

        for (std::size_t l = net.layer_count(); l-- > 0;) {
            const std::size_t in = net.sizes[l], out = net.sizes[l + 1];
            double* gw = out_grads.weights[l].data();
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[o];
                if (d == 0.0) continue;
                out_grads.biases[l][o] += d;
                double* row = gw + o * in;
                const double* a = acts[l].data();
                for (std::size_t i = 0; i < in; ++i) row[i] += d * a[i];
            }
            if (l == 0) break;
            delta_prev.assign(in, 0.0);
            const double* w = net.weights[l].data();
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[o];
                if (d == 0.0) continue;
                const double* row = w + o * in;
                for (std::size_t i = 0; i < in; ++i) delta_prev[i] += d * row[i];
            }
            // rectifier derivative from the cached activation
            for (std::size_t i = 0; i < in; ++i)
                if (acts[l][i] <= 0.0) delta_prev[i] = 0.0;
            delta.swap(delta_prev);
        }
    }
    return loss * inv_n;
}

double batch_loss(const Mlp& net, std::span<const QExample> batch) {
    if (batch.empty()) throw ValidationError("empty minibatch");
    double loss = 0.0;
    for (const QExample& ex : batch) {
        const double q = net.forward(ex.state)[std::size_t(ex.action)];
        loss += (q - ex.target) * (q - ex.target);
    }
    return loss / double(batch.size());
}

namespace {

// Loss evaluated in extended precision. The finite-difference oracle divides
// a tiny loss difference by 2h, so its own rounding noise has to sit well
// below the 1e-4 verification threshold.
long double batch_loss_ld(const Mlp& net, std::span<const QExample> batch) {
    long double loss = 0.0L;
    std::vector<long double> act, next;
    for (const QExample& ex : batch) {
        act.assign(ex.state.begin(), ex.state.end());
        for (std::size_t l = 0; l < net.layer_count(); ++l) {
            const std::size_t in = net.sizes[l], out = net.sizes[l + 1];
            next.assign(out, 0.0L);
            const double* w = net.weights[l].data();
            for (std::size_t o = 0; o < out; ++o) {
                long double z = net.biases[l][o];
                const double* row = w + o * in;
                for (std::size_t i = 0; i < in; ++i) z += (long double)row[i] * act[i];
                next[o] = (l + 1 < net.layer_count() && z < 0.0L) ? 0.0L : z;
            }
            act.swap(next);
        }
        const long double diff = act[std::size_t(ex.action)] - (long double)ex.target;
        loss += diff * diff;
    }
    return loss / (long double)batch.size();
}

}  // namespace

double grad_check(const Mlp& net, std::span<const QExample> batch) {
    Gradients analytic = Gradients::zeros_like(net);
    loss_and_gradients(net, batch, analytic);

    const double h = 1e-5;
    Mlp probe = net;
    double max_err = 0.0;
    auto check_param = [&](double& p, double ga) {
        const double saved = p;
        p = saved + h;
        const long double lp = batch_loss_ld(probe, batch);
        p = saved - h;
        const long double lm = batch_loss_ld(probe, batch);
        p = saved;
        const double gn = double((lp - lm) / (2.0L * h));
        const double err = std::fabs(ga - gn) / std::max(1e-8, std::fabs(ga) + std::fabs(gn));
        max_err = std::max(max_err, err);
    };
    for (std::size_t l = 0; l < probe.layer_count(); ++l) {
        for (std::size_t k = 0; k < probe.weights[l].size(); ++k)
            check_param(probe.weights[l][k], analytic.weights[l][k]);
        for (std::size_t k = 0; k < probe.biases[l].size(); ++k)
            check_param(probe.biases[l][k], analytic.biases[l][k]);
    }
    return max_err;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must be in [0,1]");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (sync_every < 1) throw ValidationError("sync_every must be >= 1");
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw ValidationError("split_fraction must be in (0,1)");
    if (hidden_sizes.empty()) throw ValidationError("at least one hidden layer required");
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
    TrainConfig c;
    c.learning_rate = cfg.get_double("learning_rate", c.learning_rate);
    c.gamma = cfg.get_double("gamma", c.gamma);
    c.batch_size = int(cfg.get_int("batch_size", c.batch_size));
    c.sync_every = int(cfg.get_int("sync_every", c.sync_every));
    c.epochs = int(cfg.get_int("epochs", c.epochs));
    c.seed = std::uint64_t(cfg.get_int("seed", 0));
    const std::string opt = cfg.get_string("optimizer", "adam");
    if (opt == "adam") c.optimizer = OptimizerKind::Adam;
    else if (opt == "sgd") c.optimizer = OptimizerKind::Sgd;
    else throw ValidationError("unknown optimizer '" + opt + "' (adam|sgd)");
    c.adam_beta1 = cfg.get_double("adam_beta1", c.adam_beta1);
    c.adam_beta2 = cfg.get_double("adam_beta2", c.adam_beta2);
    c.adam_epsilon = cfg.get_double("adam_epsilon", c.adam_epsilon);
    c.split_fraction = cfg.get_double("split_fraction", c.split_fraction);
    c.mask_successor_slots = cfg.get_bool("mask_successor_slots", c.mask_successor_slots);
    const std::vector<int> hidden = cfg.get_int_list("hidden_sizes", {16, 16});
    c.hidden_sizes.clear();
    for (int h : hidden) c.hidden_sizes.push_back(std::size_t(h));
    c.we_positions = cfg.get_int_list("we_positions", {});
    c.validate();
    return c;
}

std::vector<double> Policy::standardize(const FeatureVector& raw) const {
    if (raw.size() != mean.size())
        throw ValidationError("policy: feature dimension mismatch (got " +
                              std::to_string(raw.size()) + ", expected " +
                              std::to_string(mean.size()) + ")");
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (raw.values[i] - mean[i]) / sd[i];
    return out;
}

std::array<double, 3> Policy::q_values(const FeatureVector& raw) const {
    const std::vector<double> q = net.forward(standardize(raw));
    if (q.size() != 3) throw ValidationError("policy net must have 3 outputs");
    return {q[0], q[1], q[2]};
}

namespace {

int masked_argmax(std::span<const double> q, const std::array<bool, 3>& mask) {
    int best = -1;
    for (int a = 0; a < int(q.size()) && a < 3; ++a) {
        if (!mask[std::size_t(a)]) continue;
        if (best < 0 || q[std::size_t(a)] > q[std::size_t(best)]) best = a;
    }
    if (best < 0) throw ValidationError("action mask excludes every action");
    return best;
}

}  // namespace

double ddqn_target(const TransitionRecord& record,
                   const std::optional<FeatureVector>& successor, const Mlp& main,
                   const Mlp& target, double gamma,
                   const std::array<bool, 3>& successor_mask) {
    if (record.done) return record.reward.value();
    if (!successor)
        throw ValidationError("non-terminal record without a successor state");
    const std::vector<double> q_main = main.forward(successor->values);
    const int chosen = masked_argmax(q_main, successor_mask);
    const std::vector<double> q_target = target.forward(successor->values);
    return record.reward.value() + gamma * q_target[std::size_t(chosen)];
}

InterventionAction select_action(const Policy& policy, const FeatureVector& state,
                                 const std::array<bool, 3>& mask) {
    const std::array<double, 3> q = policy.q_values(state);
    return InterventionAction(masked_argmax(std::span<const double>(q), mask));
}

DdqnTrainer::DdqnTrainer(const TrainConfig& config, std::size_t feature_dim,
                         Rng& init_rng)
    : config_(config) {
    config_.validate();
    std::vector<std::size_t> sizes;
    sizes.push_back(feature_dim);
    for (std::size_t h : config_.hidden_sizes) sizes.push_back(h);
    sizes.push_back(std::size_t(kActionCount));
    main_ = Mlp::random_init(sizes, init_rng);
    target_ = main_;
    grads_ = Gradients::zeros_like(main_);
    adam_m_ = Gradients::zeros_like(main_);
    adam_v_ = Gradients::zeros_like(main_);
}

double DdqnTrainer::train_step(std::span<const Transition> batch) {
    if (batch.empty()) throw ValidationError("empty minibatch");

    std::vector<QExample> examples;
    examples.reserve(batch.size());
    for (const Transition& tr : batch) {
        QExample ex;
        ex.state = tr.state;
        ex.action = tr.action;
        if (tr.done) {
            ex.target = tr.reward;
        } else {
            if (!tr.next_state)
                throw ValidationError("non-terminal transition without successor");
            const std::vector<double> q_main = main_.forward(*tr.next_state);
            const int chosen = masked_argmax(q_main, tr.next_mask);
            const std::vector<double> q_target = target_.forward(*tr.next_state);
            ex.target = tr.reward + config_.gamma * q_target[std::size_t(chosen)];
        }
        examples.push_back(std::move(ex));
    }

    const double loss = loss_and_gradients(main_, examples, grads_);

    if (config_.optimizer == OptimizerKind::Sgd) {
        for (std::size_t l = 0; l < main_.layer_count(); ++l) {
            for (std::size_t k = 0; k < main_.weights[l].size(); ++k)
                main_.weights[l][k] -= config_.learning_rate * grads_.weights[l][k];
            for (std::size_t k = 0; k < main_.biases[l].size(); ++k)
                main_.biases[l][k] -= config_.learning_rate * grads_.biases[l][k];
        }
    } else {
        ++adam_t_;
        const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
        const double corr1 = 1.0 - std::pow(b1, double(adam_t_));
        const double corr2 = 1.0 - std::pow(b2, double(adam_t_));
        auto update = [&](std::vector<double>& p, const std::vector<double>& g,
                          std::vector<double>& m, std::vector<double>& v) {
            for (std::size_t k = 0; k < p.size(); ++k) {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                const double mhat = m[k] / corr1;
                const double vhat = v[k] / corr2;
                p[k] -= config_.learning_rate * mhat /
                        (std::sqrt(vhat) + config_.adam_epsilon);
            }
        };
        for (std::size_t l = 0; l < main_.layer_count(); ++l) {
            update(main_.weights[l], grads_.weights[l], adam_m_.weights[l],
                   adam_v_.weights[l]);
            update(main_.biases[l], grads_.biases[l], adam_m_.biases[l],
                   adam_v_.biases[l]);
        }
    }

    ++update_count_;
    if (update_count_ % std::uint64_t(config_.sync_every) == 0) target_ = main_;
    return loss;
}

double DdqnTrainer::evaluate(std::span<const Transition> transitions) const {
    if (transitions.empty()) throw ValidationError("nothing to evaluate");
    double loss = 0.0;
    for (const Transition& tr : transitions) {
        double target;
        if (tr.done) {
            target = tr.reward;
        } else {
            const std::vector<double> q_main = main_.forward(*tr.next_state);
            const int chosen = masked_argmax(q_main, tr.next_mask);
            target = tr.reward +
                     config_.gamma * target_.forward(*tr.next_state)[std::size_t(chosen)];
        }
        const double q = main_.forward(tr.state)[std::size_t(tr.action)];
        loss += (q - target) * (q - target);
    }
    return loss / double(transitions.size());
}

namespace {

struct Standardizer {
    std::vector<double> mean, sd;
};

Standardizer fit_standardizer(const ReplayCorpus& corpus) {
    const std::size_t dim = corpus.feature_dim;
    Standardizer s;
    s.mean.assign(dim, 0.0);
    s.sd.assign(dim, 0.0);
    const double n = double(corpus.records.size());
    for (const TransitionRecord& r : corpus.records)
        for (std::size_t i = 0; i < dim; ++i) s.mean[i] += r.state.values[i];
    for (double& m : s.mean) m /= n;
    for (const TransitionRecord& r : corpus.records)
        for (std::size_t i = 0; i < dim; ++i) {
            const double d = r.state.values[i] - s.mean[i];
            s.sd[i] += d * d;
        }
    for (double& v : s.sd) v = std::max(std::sqrt(v / n), 1e-8);
    return s;
}

std::vector<double> apply_standardizer(const Standardizer& s,
                                       const FeatureVector& raw) {
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (raw.values[i] - s.mean[i]) / s.sd[i];
    return out;
}

std::vector<Transition> prepare_transitions(const ReplayCorpus& corpus,
                                            const Standardizer& std_,
                                            const TrainConfig& cfg) {
    std::vector<Transition> out;
    out.reserve(corpus.records.size());
    for (std::size_t i = 0; i < corpus.records.size(); ++i) {
        const TransitionRecord& r = corpus.records[i];
        Transition tr;
        tr.state = apply_standardizer(std_, r.state);
        tr.action = int(r.action);
        tr.reward = r.reward.value();
        tr.done = r.done;
        if (!r.done) {
            const auto succ = corpus.successor_of(i);
            if (!succ)
                throw ValidationError("student '" + r.student_id +
                                      "': non-terminal record without successor");
            const TransitionRecord& s = corpus.records[*succ];
            tr.next_state = apply_standardizer(std_, s.state);
            if (cfg.mask_successor_slots)
                tr.next_mask = slot_mask(s.position, cfg.we_positions);
        }
        out.push_back(std::move(tr));
    }
    return out;
}

}  // namespace

TrainResult train(const ReplayCorpus& corpus, const TrainConfig& config) {
    config.validate();
    if (corpus.records.empty()) throw ValidationError("training corpus is empty");

    ReplayCorpus train_side, test_side;
    if (corpus.n_students() >= 2) {
        std::tie(train_side, test_side) =
            split_corpus(corpus, config.split_fraction, derive_seed(config.seed, 0));
    } else {
        train_side = corpus;
        train_side.build_index();
    }
    if (train_side.records.empty())
        throw ValidationError("training split is empty; corpus too small");

    const Standardizer std_ = fit_standardizer(train_side);
    const std::vector<Transition> train_set =
        prepare_transitions(train_side, std_, config);
    const std::vector<Transition> test_set =
        test_side.records.empty() ? std::vector<Transition>{}
                                  : prepare_transitions(test_side, std_, config);

    Rng init_rng(derive_seed(config.seed, 1));
    DdqnTrainer trainer(config, corpus.feature_dim, init_rng);

    TrainResult result;
    auto snapshot = [&](Policy& dst) {
        dst.net = trainer.main_net();
        dst.mean = std_.mean;
        dst.sd = std_.sd;
    };

    Rng shuffle_rng(derive_seed(config.seed, 2));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Transition> batch;
    double best_loss = std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_sse = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += std::size_t(config.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + std::size_t(config.batch_size));
            batch.clear();
            for (std::size_t k = start; k < stop; ++k)
                batch.push_back(train_set[order[k]]);
            const double loss = trainer.train_step(batch);
            epoch_sse += loss * double(stop - start);
        }
        result.train_mse.push_back(epoch_sse / double(train_set.size()));

        const double held_out = test_set.empty()
                                    ? result.train_mse.back()
                                    : trainer.evaluate(test_set);
        if (!test_set.empty()) result.test_mse.push_back(held_out);
        if (held_out < best_loss) {
            best_loss = held_out;
            result.best_epoch = std::size_t(epoch);
            snapshot(result.best_policy);
        }
    }

    snapshot(result.policy);
    if (config.epochs == 0) snapshot(result.best_policy);
    return result;
}

void save_policy(const Policy& policy, std::ostream& out) {
    out << "format policy-v1\n";
    out << "layer_sizes";
    for (std::size_t s : policy.net.sizes) out << ' ' << s;
    out << '\n';
    out << "actions 0=none 1=nudge 2=present\n";
    for (std::size_t l = 0; l < policy.net.layer_count(); ++l) {
        out << "weights " << l << '\n';
        const std::size_t in = policy.net.sizes[l], outn = policy.net.sizes[l + 1];
        for (std::size_t o = 0; o < outn; ++o) {
            for (std::size_t i = 0; i < in; ++i) {
                if (i) out << ' ';
                out << format_full(policy.net.weights[l][o * in + i]);
            }
            out << '\n';
        }
        out << "biases " << l << '\n';
        for (std::size_t o = 0; o < outn; ++o) {
            if (o) out << ' ';
            out << format_full(policy.net.biases[l][o]);
        }
        out << '\n';
    }
    auto write_vec = [&](const char* name, const std::vector<double>& v) {
        out << name << '\n';
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) out << ' ';
            out << format_full(v[i]);
        }
        out << '\n';
    };
    write_vec("standardize_mean", policy.mean);
    write_vec("standardize_sd", policy.sd);
    out << "end\n";
}

namespace {

std::string policy_line(std::istream& in, const std::string& what) {
    std::string line;
    if (!std::getline(in, line))
        throw ValidationError("policy file truncated while reading " + what);
    return line;
}

std::vector<double> parse_row(const std::string& line, std::size_t expected,
                              const std::string& what) {
    const auto toks = split_ws(line);
    if (toks.size() != expected)
        throw ValidationError("policy file: " + what + " has " +
                              std::to_string(toks.size()) + " values, expected " +
                              std::to_string(expected));
    std::vector<double> out;
    out.reserve(expected);
    for (const std::string& t : toks) out.push_back(parse_double(t, what));
    return out;
}

}  // namespace

Policy load_policy(std::istream& in) {
    if (trim(policy_line(in, "header")) != "format policy-v1")
        throw ValidationError("policy file version mismatch");

    const auto size_toks = split_ws(policy_line(in, "layer sizes"));
    if (size_toks.size() < 3 || size_toks[0] != "layer_sizes")
        throw ValidationError("policy file: expected layer_sizes");
    std::vector<std::size_t> sizes;
    for (std::size_t i = 1; i < size_toks.size(); ++i) {
        const long long v = parse_int(size_toks[i], "layer size");
        if (v < 1) throw ValidationError("policy file: layer size corrupt");
        sizes.push_back(std::size_t(v));
    }
    if (trim(policy_line(in, "action table")) != "actions 0=none 1=nudge 2=present")
        throw ValidationError("policy file: unexpected action table");

    Policy policy;
    policy.net = Mlp::zeros(sizes);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        if (trim(policy_line(in, "weights header")) != "weights " + std::to_string(l))
            throw ValidationError("policy file: expected weights " + std::to_string(l));
        const std::size_t in_dim = sizes[l], out_dim = sizes[l + 1];
        for (std::size_t o = 0; o < out_dim; ++o) {
            const auto row = parse_row(policy_line(in, "weight row"), in_dim,
                                       "weight row");
            std::copy(row.begin(), row.end(),
                      policy.net.weights[l].begin() + std::ptrdiff_t(o * in_dim));
        }
        if (trim(policy_line(in, "biases header")) != "biases " + std::to_string(l))
            throw ValidationError("policy file: expected biases " + std::to_string(l));
        policy.net.biases[l] =
            parse_row(policy_line(in, "bias row"), out_dim, "bias row");
    }
    if (trim(policy_line(in, "mean header")) != "standardize_mean")
        throw ValidationError("policy file: expected standardize_mean");
    policy.mean = parse_row(policy_line(in, "mean row"), sizes.front(), "mean row");
    if (trim(policy_line(in, "sd header")) != "standardize_sd")
        throw ValidationError("policy file: expected standardize_sd");
    policy.sd = parse_row(policy_line(in, "sd row"), sizes.front(), "sd row");
    for (double s : policy.sd)
        if (!(s > 0.0)) throw ValidationError("policy file: sd must be positive");
    if (trim(policy_line(in, "trailer")) != "end")
        throw ValidationError("policy file: missing end marker");
    return policy;
}

void save_policy_file(const Policy& policy, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write policy file: " + path);
    save_policy(policy, out);
    if (!out) throw IoError("write failed: " + path);
}

Policy load_policy_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open policy file: " + path);
    return load_policy(in);
}

}  // namespace metatutor::deepq
