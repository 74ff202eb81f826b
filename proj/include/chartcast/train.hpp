#pragma once

// Loss composition, the two-group AdamW optimizer with schedules and global
// gradient clipping, the training loop with early stopping on validation
// generation loss, and the text checkpoint container.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "chartcast/config.hpp"
#include "chartcast/dataset.hpp"
#include "chartcast/model.hpp"
#include "chartcast/params.hpp"
#include "chartcast/tensor.hpp"

namespace chartcast {

// Mean squared error over all elements of equally shaped tensors.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Mean of 200*|p-t| / (|p|+|t|+1e-8); the epsilon keeps the all-zero
// corner differentiable.
Tensor smape_loss(const Tensor& pred, const Tensor& target);

struct LossBreakdown {
    Tensor total;       // lambda1 * gen + lambda2 * align (graph-connected)
    double gen = 0.0;   // generation term before weighting
    double align = 0.0; // alignment term before weighting; 0 when disabled
};

// Forward the batch of windows and combine the weighted losses. Throws
// naming the offending term if either loss is not finite. The vision
// branch only runs when the alignment term is active.
LossBreakdown total_loss(const ChartcastModel& model,
                         const std::vector<SeriesWindow>& windows,
                         const std::vector<std::size_t>& batch,
                         const RunConfig& cfg);

// Epoch scale factor applied to both group learning rates: cosine decay to
// zero across max_epochs, or gamma^epoch.
double schedule_scale(const RunConfig& cfg, std::size_t epoch);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(ParamRegistry& reg, double max_norm);

class AdamW {
public:
    struct Settings {
        double lr_encoder = 1e-4;
        double lr_head = 1e-3;
        double weight_decay = 0.01;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };
    struct Slot {
        std::vector<real> m, v;
    };

    AdamW(ParamRegistry& reg, Settings s);

    // Applies the gradients currently on the parameters; lr_scale comes
    // from the schedule. Frozen parameters are skipped entirely.
    void step(double lr_scale);

    std::size_t steps() const { return t_; }
    std::vector<Slot>& slots() { return slots_; }
    const std::vector<Slot>& slots() const { return slots_; }
    std::size_t& step_count() { return t_; }
    const Settings& settings() const { return settings_; }

private:
    ParamRegistry& reg_;
    Settings settings_;
    std::vector<Slot> slots_;
    std::size_t t_ = 0;
};

struct EpochLog {
    std::size_t epoch = 0;
    double lr_encoder = 0.0, lr_head = 0.0;
    double train_total = 0.0, train_gen = 0.0, train_align = 0.0;
    double val_gen = 0.0;
    double retrieval = 0.0;
    double tau = 0.0;
    double grad_norm = 0.0;
};

std::string format_epoch(const EpochLog& e);

struct TrainResult {
    std::vector<EpochLog> log;
    double best_val = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    bool early_stopped = false;
    bool diverged = false;
    std::string divergence_reason;
};

// Trains in place; on return the model holds the best-validation
// parameters. checkpoint_path, when nonempty, receives the best checkpoint.
// on_epoch, when set, observes each epoch's log entry as it is produced.
TrainResult train_model(
    ChartcastModel& model, const std::vector<SeriesWindow>& train_windows,
    const std::vector<SeriesWindow>& val_windows, const RunConfig& cfg,
    const std::string& checkpoint_path = "",
    const std::function<void(const EpochLog&)>& on_epoch = {});

// Mean generation loss (cfg.train_gen_loss) over the windows.
double evaluate_gen_loss(const ChartcastModel& model,
                         const std::vector<SeriesWindow>& windows,
                         const RunConfig& cfg);

// In-batch retrieval accuracy over consecutive groups of group_size test
// windows (the last partial group is dropped); 0 when vision is off.
double evaluate_retrieval(const ChartcastModel& model,
                          const std::vector<SeriesWindow>& windows,
                          std::size_t group_size);

// Versioned text checkpoint: config snapshot, parameter tensors, optimizer
// state, epoch and best score. Hexfloat values round-trip bit-exactly.
void save_checkpoint(const std::string& path, const ChartcastModel& model,
                     const AdamW* opt, std::size_t epoch, double best_val);

struct LoadedCheckpoint {
    std::unique_ptr<ChartcastModel> model;
    std::unique_ptr<AdamW> opt;  // null when the file has no optimizer state
    std::size_t epoch = 0;
    double best_val = 0.0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace chartcast
