#include "chartcast/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "chartcast/align.hpp"
#include "chartcast/rng.hpp"

namespace chartcast {

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    return mean(square(sub(pred, target)));
}

Tensor smape_loss(const Tensor& pred, const Tensor& target) {
    const Tensor num = abs_elem(sub(pred, target));
    const Tensor den =
        add_const(add(abs_elem(pred), abs_elem(target)), 1e-8);
    return scale(mean(div_elem(num, den)), 200.0);
}

LossBreakdown total_loss(const ChartcastModel& model,
                         const std::vector<SeriesWindow>& windows,
                         const std::vector<std::size_t>& batch,
                         const RunConfig& cfg) {
    if (batch.empty()) throw std::invalid_argument("empty training batch");
    const bool align_active = !cfg.ablate_no_align &&
                              cfg.train_lambda2 != 0.0 && model.has_vision();

    std::vector<Tensor> preds, targets, vision_side, language_side;
    preds.reserve(batch.size());
    targets.reserve(batch.size());
    for (std::size_t idx : batch) {
        const auto out = model.forward(windows[idx], align_active);
        preds.push_back(out.forecast);
        targets.push_back(model.target(windows[idx]));
        if (align_active) {
            vision_side.push_back(out.vision_cls);
            language_side.push_back(out.language_cls);
        }
    }
    const Tensor pred = preds.size() == 1 ? preds[0] : concat_rows(preds);
    const Tensor target =
        targets.size() == 1 ? targets[0] : concat_rows(targets);

    LossBreakdown out;
    const Tensor gen = cfg.train_gen_loss == "smape" ? smape_loss(pred, target)
                                                     : mse_loss(pred, target);
    out.gen = gen.scalar_value();
    if (!std::isfinite(out.gen))
        throw std::runtime_error("generation loss is not finite");

    if (align_active) {
        const Tensor align = align_loss(vision_side, language_side,
                                        model.log_tau(), cfg.align_per_variate);
        out.align = align.scalar_value();
        if (!std::isfinite(out.align))
            throw std::runtime_error("alignment loss is not finite");
        out.total = add(scale(gen, cfg.train_lambda1),
                        scale(align, cfg.train_lambda2));
    } else {
        out.total = scale(gen, cfg.train_lambda1);
    }
    return out;
}

double schedule_scale(const RunConfig& cfg, std::size_t epoch) {
    if (cfg.train_schedule == "exponential")
        return std::pow(cfg.train_gamma, static_cast<double>(epoch));
    const std::size_t last = cfg.train_max_epochs - 1;
    if (last == 0) return 1.0;
    const double x = static_cast<double>(epoch) / static_cast<double>(last);
    return 0.5 * (1.0 + std::cos(std::numbers::pi * x));
}

double clip_global_norm(ParamRegistry& reg, double max_norm) {
    double sq = 0.0;
    for (const Param& p : reg.params()) {
        if (!p.tensor.requires_grad()) continue;
        for (real g : p.tensor.grad()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (std::isfinite(norm) && norm > max_norm && norm > 0.0) {
        const real s = static_cast<real>(max_norm / norm);
        for (Param& p : reg.params()) {
            if (!p.tensor.requires_grad()) continue;
            auto& node = *p.tensor.node();
            for (real& g : node.grad) g *= s;
        }
    }
    return norm;
}

AdamW::AdamW(ParamRegistry& reg, Settings s) : reg_(reg), settings_(s) {
    slots_.resize(reg.params().size());
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        const std::size_t n = reg.params()[i].tensor.numel();
        slots_[i].m.assign(n, real(0));
        slots_[i].v.assign(n, real(0));
    }
}

void AdamW::step(double lr_scale) {
    ++t_;
    const double bc1 = 1.0 - std::pow(settings_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(settings_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < reg_.params().size(); ++i) {
        Param& p = reg_.params()[i];
        if (!p.tensor.requires_grad()) continue;
        auto& node = *p.tensor.node();
        if (node.grad.empty()) continue;
        const double lr =
            (p.group == ParamGroup::encoder ? settings_.lr_encoder
                                            : settings_.lr_head) *
            lr_scale;
        Slot& s = slots_[i];
        for (std::size_t j = 0; j < node.values.size(); ++j) {
            const double g = node.grad[j];
            s.m[j] = static_cast<real>(settings_.beta1 * s.m[j] +
                                       (1.0 - settings_.beta1) * g);
            s.v[j] = static_cast<real>(settings_.beta2 * s.v[j] +
                                       (1.0 - settings_.beta2) * g * g);
            const double mh = s.m[j] / bc1;
            const double vh = s.v[j] / bc2;
            double x = node.values[j];
            x -= lr * mh / (std::sqrt(vh) + settings_.eps);
            if (p.decay) x -= lr * settings_.weight_decay * node.values[j];
            node.values[j] = static_cast<real>(x);
        }
    }
}

std::string format_epoch(const EpochLog& e) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "epoch=%zu lr_encoder=%.8g lr_head=%.8g train_total=%.8g "
                  "train_gen=%.8g train_align=%.8g val_gen=%.8g retrieval=%.4f "
                  "tau=%.6g grad_norm=%.6g",
                  e.epoch, e.lr_encoder, e.lr_head, e.train_total, e.train_gen,
                  e.train_align, e.val_gen, e.retrieval, e.tau, e.grad_norm);
    return buf;
}

double evaluate_gen_loss(const ChartcastModel& model,
                         const std::vector<SeriesWindow>& windows,
                         const RunConfig& cfg) {
    if (windows.empty()) throw std::invalid_argument("no windows to evaluate");
    double total = 0.0;
    for (const auto& w : windows) {
        const auto out = model.forward(w, false);
        const Tensor t = model.target(w);
        const Tensor loss = cfg.train_gen_loss == "smape"
                                ? smape_loss(out.forecast, t)
                                : mse_loss(out.forecast, t);
        total += loss.scalar_value();
    }
    return total / static_cast<double>(windows.size());
}

double evaluate_retrieval(const ChartcastModel& model,
                          const std::vector<SeriesWindow>& windows,
                          std::size_t group_size) {
    if (!model.has_vision() || group_size < 2 || windows.size() < group_size)
        return 0.0;
    double total = 0.0;
    std::size_t groups = 0;
    for (std::size_t base = 0; base + group_size <= windows.size();
         base += group_size) {
        std::vector<Tensor> v, l;
        for (std::size_t i = 0; i < group_size; ++i) {
            const auto out = model.forward(windows[base + i], true);
            v.push_back(out.vision_cls);
            l.push_back(out.language_cls);
        }
        total += retrieval_accuracy(v, l);
        ++groups;
    }
    return total / static_cast<double>(groups);
}

namespace {

std::vector<std::vector<real>> snapshot_values(const ParamRegistry& reg) {
    std::vector<std::vector<real>> out;
    out.reserve(reg.params().size());
    for (const Param& p : reg.params()) out.push_back(p.tensor.values());
    return out;
}

void restore_values(ParamRegistry& reg,
                    const std::vector<std::vector<real>>& snap) {
    for (std::size_t i = 0; i < reg.params().size(); ++i)
        reg.params()[i].tensor.values() = snap[i];
}

}  // namespace

TrainResult train_model(ChartcastModel& model,
                        const std::vector<SeriesWindow>& train_windows,
                        const std::vector<SeriesWindow>& val_windows,
                        const RunConfig& cfg,
                        const std::string& checkpoint_path,
                        const std::function<void(const EpochLog&)>& on_epoch) {
    if (train_windows.empty() || val_windows.empty())
        throw std::invalid_argument("training needs non-empty train and val splits");

    AdamW::Settings as;
    as.lr_encoder = cfg.train_lr_encoder;
    as.lr_head = cfg.train_lr_head;
    as.weight_decay = cfg.train_weight_decay;
    AdamW opt(model.registry(), as);

    TrainResult result;
    result.best_val = std::numeric_limits<double>::infinity();
    auto best_params = snapshot_values(model.registry());
    std::size_t since_best = 0;

    Rng shuffle_rng(mix_seed(cfg.train_seed, "batch-shuffle"));
    std::vector<std::size_t> order(train_windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.train_max_epochs; ++epoch) {
        const double scale = schedule_scale(cfg, epoch);
        shuffle_rng.shuffle(order);

        double sum_total = 0.0, sum_gen = 0.0, sum_align = 0.0;
        double worst_norm = 0.0;
        std::size_t batches = 0;
        bool epoch_failed = false;

        for (std::size_t base = 0; base < order.size();
             base += cfg.train_batch_size) {
            const std::size_t take =
                std::min(cfg.train_batch_size, order.size() - base);
            std::vector<std::size_t> batch(order.begin() + base,
                                           order.begin() + base + take);
            model.registry().zero_grads();
            LossBreakdown loss;
            try {
                loss = total_loss(model, train_windows, batch, cfg);
            } catch (const std::runtime_error& e) {
                result.diverged = true;
                result.divergence_reason = e.what();
                epoch_failed = true;
                break;
            }
            backward(loss.total);
            const double norm =
                clip_global_norm(model.registry(), cfg.train_clip_norm);
            if (!std::isfinite(norm)) {
                result.diverged = true;
                result.divergence_reason = "gradient norm is not finite";
                epoch_failed = true;
                break;
            }
            worst_norm = std::max(worst_norm, norm);
            opt.step(scale);
            sum_total += loss.total.scalar_value();
            sum_gen += loss.gen;
            sum_align += loss.align;
            ++batches;
        }
        if (epoch_failed) break;

        EpochLog log;
        log.epoch = epoch;
        log.lr_encoder = cfg.train_lr_encoder * scale;
        log.lr_head = cfg.train_lr_head * scale;
        log.train_total = sum_total / static_cast<double>(batches);
        log.train_gen = sum_gen / static_cast<double>(batches);
        log.train_align = sum_align / static_cast<double>(batches);
        log.val_gen = evaluate_gen_loss(model, val_windows, cfg);
        log.retrieval = evaluate_retrieval(
            model, val_windows,
            std::min<std::size_t>(cfg.train_batch_size, val_windows.size()));
        log.tau = std::exp(model.log_tau().scalar_value());
        log.grad_norm = worst_norm;
        result.log.push_back(log);
        result.epochs_run = epoch + 1;
        if (on_epoch) on_epoch(log);

        if (!std::isfinite(log.val_gen)) {
            result.diverged = true;
            result.divergence_reason = "validation loss is not finite";
            break;
        }
        if (log.val_gen < result.best_val) {
            result.best_val = log.val_gen;
            result.best_epoch = epoch;
            best_params = snapshot_values(model.registry());
            since_best = 0;
            if (!checkpoint_path.empty())
                save_checkpoint(checkpoint_path, model, &opt, epoch,
                                result.best_val);
        } else {
            ++since_best;
            if (since_best >= cfg.train_patience) {
                result.early_stopped = true;
                break;
            }
        }
    }

    restore_values(model.registry(), best_params);
    return result;
}

// ---- checkpoint -------------------------------------------------------------

namespace {

constexpr const char* kCheckpointMagic = "chartcast-checkpoint v1";

void write_reals(std::ostream& os, const std::vector<real>& v) {
    char buf[48];
    for (real x : v) {
        std::snprintf(buf, sizeof(buf), " %a", static_cast<double>(x));
        os << buf;
    }
}

void read_reals(std::istream& is, std::vector<real>& v, std::size_t n,
                const std::string& what) {
    v.resize(n);
    std::string tok;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(is >> tok))
            throw std::runtime_error("checkpoint truncated while reading " + what);
        v[i] = static_cast<real>(std::strtod(tok.c_str(), nullptr));
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const ChartcastModel& model,
                     const AdamW* opt, std::size_t epoch, double best_val) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << kCheckpointMagic << "\n";
    out << "variates=" << model.variates() << "\n";
    out << "epoch=" << epoch << "\n";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", best_val);
    out << "best_val=" << buf << "\n";
    out << "config-begin\n" << to_string(model.config()) << "config-end\n";

    const auto& params = model.registry().params();
    out << "params=" << params.size() << "\n";
    for (const Param& p : params) {
        out << "param " << p.name << " " << p.tensor.shape().size();
        for (std::size_t d : p.tensor.shape()) out << " " << d;
        write_reals(out, p.tensor.values());
        out << "\n";
    }
    if (opt) {
        out << "adam-step=" << opt->steps() << "\n";
        const auto& slots = opt->slots();
        for (std::size_t i = 0; i < params.size(); ++i) {
            out << "adam " << params[i].name;
            write_reals(out, slots[i].m);
            write_reals(out, slots[i].v);
            out << "\n";
        }
    }
    out << "end\n";
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic)
        throw std::runtime_error("not a recognizable checkpoint: " + path);

    auto read_kv = [&](const std::string& key) {
        if (!std::getline(in, line) || line.rfind(key + "=", 0) != 0)
            throw std::runtime_error("checkpoint missing field " + key);
        return line.substr(key.size() + 1);
    };
    const std::size_t variates = std::stoul(read_kv("variates"));
    LoadedCheckpoint ck;
    ck.epoch = std::stoul(read_kv("epoch"));
    ck.best_val = std::strtod(read_kv("best_val").c_str(), nullptr);

    if (!std::getline(in, line) || line != "config-begin")
        throw std::runtime_error("checkpoint missing config block");
    RunConfig cfg;
    std::size_t cfg_line = 0;
    while (std::getline(in, line) && line != "config-end") {
        ++cfg_line;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("malformed checkpoint config line: " + line);
        apply_pair(cfg, line.substr(0, eq), line.substr(eq + 1), cfg_line);
    }
    resolve(cfg);
    ck.model = std::make_unique<ChartcastModel>(cfg, variates);

    const std::size_t n_params = std::stoul(read_kv("params"));
    auto& params = ck.model->registry().params();
    if (n_params != params.size())
        throw std::runtime_error("checkpoint parameter count mismatch");
    std::string word;
    for (std::size_t i = 0; i < n_params; ++i) {
        if (!(in >> word) || word != "param")
            throw std::runtime_error("checkpoint missing param record");
        std::string name;
        std::size_t rank = 0;
        in >> name >> rank;
        Shape shape(rank);
        for (auto& d : shape) in >> d;
        Param& p = ck.model->registry().at(name);
        if (p.tensor.shape() != shape)
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        read_reals(in, p.tensor.values(), p.tensor.numel(), name);
    }

    if (in >> word && word.rfind("adam-step=", 0) == 0) {
        AdamW::Settings as;
        as.lr_encoder = cfg.train_lr_encoder;
        as.lr_head = cfg.train_lr_head;
        as.weight_decay = cfg.train_weight_decay;
        ck.opt = std::make_unique<AdamW>(ck.model->registry(), as);
        ck.opt->step_count() = std::stoul(word.substr(10));
        for (std::size_t i = 0; i < n_params; ++i) {
            if (!(in >> word) || word != "adam")
                throw std::runtime_error("checkpoint missing optimizer record");
            std::string name;
            in >> name;
            Param& p = ck.model->registry().at(name);
            AdamW::Slot& slot = ck.opt->slots()[&p - params.data()];
            read_reals(in, slot.m, p.tensor.numel(), name + ".m");
            read_reals(in, slot.v, p.tensor.numel(), name + ".v");
        }
    }
    return ck;
}

}  // namespace chartcast
