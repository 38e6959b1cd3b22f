#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracevae/objectives.hpp"
#include "tracevae/optim.hpp"

namespace tracevae {

// Raised when the objective or a gradient stops being finite. Parameters
// are left at their last finite values.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct TrainOptions {
    std::size_t steps = 2000;
    std::size_t batch_size = 32;
    AdamOptions adam;
    std::size_t cycles = 4;
    double ramp_fraction = 0.5;
};

struct TrainState {
    std::uint64_t step = 0;
    AdamState adam;
    RngStreams rng;
    double best_valid = std::numeric_limits<double>::infinity();

    bool operator==(const TrainState &) const = default;
};

// One line of the training log. recon, kl_total and bound are batch means
// per sequence; bound is the per-segment floor times the mean segment count.
struct StepLog {
    std::uint64_t step = 0;
    double recon = 0.0;
    double kl_total = 0.0;
    double anneal = 0.0;
    double bound = 0.0;
    double secs = 0.0;
    double objective = 0.0;
    double kl_per_segment = 0.0;
    double floor_per_segment = 0.0;
    double sigma2_max = 0.0;

    bool below_floor() const { return kl_per_segment < floor_per_segment; }
};

inline const char *kStepLogHeader = "# step\trecon\tkl_total\tanneal\tbound\tsecs";

inline std::string format_step(const StepLog &s) {
    std::ostringstream os;
    os << s.step << '\t' << std::setprecision(17) << s.recon << '\t' << s.kl_total << '\t' << s.anneal << '\t' << s.bound
       << '\t' << std::setprecision(6) << s.secs;
    return os.str();
}

class Trainer {
  public:
    Trainer(TraceModel &model, TrainOptions opt, TrainState state)
        : model_(&model), opt_(opt), state_(std::move(state)), adam_(model.params(), opt.adam, state_.adam) {
        if (opt_.batch_size == 0) throw std::invalid_argument("trainer: batch size must be >= 1");
        if (opt_.cycles == 0) throw std::invalid_argument("trainer: cycles must be >= 1");
    }

    std::size_t cycle_length() const { return std::max<std::size_t>(2, opt_.steps / opt_.cycles); }

    double current_anneal() const { return anneal_weight(state_.step, cycle_length(), opt_.ramp_fraction); }

    // One minibatch step: sample sequences, single-sample ELBO per sequence,
    // mean over the batch, Adam update, then spectral normalization.
    StepLog step(const std::vector<SegmentedSequence> &data) {
        if (data.empty()) throw std::invalid_argument("trainer: empty training set");
        const auto t0 = std::chrono::steady_clock::now();
        const double w = current_anneal();
        const std::size_t B = opt_.batch_size;
        const auto &lc = model_->config().latent;

        StepLog log;
        log.step = state_.step + 1;
        log.anneal = w;
        std::vector<Tensor> objectives;
        objectives.reserve(B);
        double segments = 0.0, sigma2_max = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            const auto &seq = data[state_.rng.data.below(data.size())];
            const Noise noise = Noise::draw(seq.num_segments(), model_->latent_dim(), state_.rng);
            ElboReport rep;
            try {
                rep = elbo(*model_, seq, w, noise);
            } catch (const DomainError &e) {
                throw NumericError("step " + std::to_string(log.step) + ": " + e.what());
            }
            objectives.push_back(rep.objective_tensor);
            log.recon += rep.recon;
            log.kl_total += rep.kl_total;
            segments += static_cast<double>(seq.num_segments());
            sigma2_max = std::max(sigma2_max, rep.sigma2_max);
        }
        Tensor total = objectives[0];
        for (std::size_t b = 1; b < B; ++b) total = add(total, objectives[b]);
        Tensor loss = scale(total, 1.0 / static_cast<double>(B));
        if (!std::isfinite(loss.item())) throw NumericError("non-finite objective at step " + std::to_string(log.step));

        model_->params().zero_grad();
        backward(loss);
        for (const auto &[name, p] : model_->params().entries())
            if (p.has_grad())
                for (double g : p.grad())
                    if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + name + " at step " + std::to_string(log.step));
        adam_.step();
        if (lc.use_spectral_norm) model_->apply_spectral_norm();

        const double Bd = static_cast<double>(B);
        log.recon /= Bd;
        log.kl_total /= Bd;
        log.objective = loss.item();
        log.sigma2_max = sigma2_max;
        log.kl_per_segment = log.kl_total * Bd / segments;
        log.floor_per_segment = kl_lower_bound(lc.latent_dim, lc.gamma, model_->beta(), sigma2_max);
        log.bound = log.floor_per_segment * segments / Bd;
        log.secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        ++state_.step;
        state_.adam = adam_.state();
        return log;
    }

    // Mean -ELBO per sequence at full KL weight with noise from a fixed seed;
    // training streams are untouched.
    double validate(const std::vector<SegmentedSequence> &valid, std::uint64_t seed = 0x7a11d) {
        if (valid.empty()) throw std::invalid_argument("trainer: empty validation set");
        NoGradGuard ng;
        auto rng = RngStreams::from_seed(seed);
        double s = 0.0;
        for (const auto &seq : valid) s += elbo(*model_, seq, 1.0, Noise::draw(seq.num_segments(), model_->latent_dim(), rng)).objective;
        const double v = s / static_cast<double>(valid.size());
        if (v < state_.best_valid) state_.best_valid = v;
        return v;
    }

    const TrainState &state() const { return state_; }
    const TrainOptions &options() const { return opt_; }
    TraceModel &model() { return *model_; }

  private:
    TraceModel *model_;
    TrainOptions opt_;
    TrainState state_;
    Adam adam_;
};

} // namespace tracevae
