#ifndef LOSSMAT_STRATEGIES_HPP
#define LOSSMAT_STRATEGIES_HPP

#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "lossmat/analysis.hpp"
#include "lossmat/common.hpp"
#include "lossmat/data.hpp"
#include "lossmat/generative.hpp"
#include "lossmat/model.hpp"

namespace lossmat {

enum class StrategyKind {
    none_,
    joint,
    ewc,
    si,
    distill,
    labels_trick,
    gen_replay,
    gen_classifier,
    slda,
};

inline const char* strategy_name(StrategyKind k) {
    switch (k) {
        case StrategyKind::none_: return "none";
        case StrategyKind::joint: return "joint";
        case StrategyKind::ewc: return "ewc";
        case StrategyKind::si: return "si";
        case StrategyKind::distill: return "distill";
        case StrategyKind::labels_trick: return "labels_trick";
        case StrategyKind::gen_replay: return "gen_replay";
        case StrategyKind::gen_classifier: return "gen_classifier";
        case StrategyKind::slda: return "slda";
    }
    return "?";
}

inline StrategyKind parse_strategy(const std::string& name) {
    for (StrategyKind k :
         {StrategyKind::none_, StrategyKind::joint, StrategyKind::ewc, StrategyKind::si,
          StrategyKind::distill, StrategyKind::labels_trick, StrategyKind::gen_replay,
          StrategyKind::gen_classifier, StrategyKind::slda})
        if (name == strategy_name(k)) return k;
    throw std::runtime_error("unknown strategy: " + name);
}

enum class ReplaySurrogate { fitted, oracle, biased };

struct StrategyHyper {
    double ewc_lambda = 100.0;
    int fisher_draws = 8;
    double si_lambda = 1.0;
    double si_damping = 0.1;
    double distill_tau = 2.0;
    double distill_alpha = 0.5;
    // fraction of each minibatch drawn from past-class densities; negative
    // means proportional to the past/seen class ratio
    double replay_ratio = -1.0;
    ReplaySurrogate surrogate = ReplaySurrogate::fitted;
    double slda_shrinkage = 1e-2;
};

// ---- per-strategy auxiliary state --------------------------------------

struct EWCState {
    struct Anchor {
        std::vector<double> params;
        std::vector<double> fisher;
    };
    std::vector<Anchor> anchors;
    double lambda = 0.0;
};

// (lambda/2) * sum over anchors of F_j (theta_j - theta*_j)^2
inline double ewc_penalty(const EWCState& state, const std::vector<double>& params,
                          std::vector<double>* grad) {
    check(!state.anchors.empty(), "ewc_penalty: no anchors stored");
    double value = 0.0;
    for (const auto& anchor : state.anchors) {
        check(anchor.params.size() == params.size(), "ewc_penalty: shape mismatch");
        for (std::size_t j = 0; j < params.size(); ++j) {
            double diff = params[j] - anchor.params[j];
            value += 0.5 * state.lambda * anchor.fisher[j] * diff * diff;
            if (grad) (*grad)[j] += state.lambda * anchor.fisher[j] * diff;
        }
    }
    return value;
}

// Diagonal Fisher: mean squared gradient of the log-likelihood of labels
// drawn from the model's own predictive distribution.
inline std::vector<double> fisher_diagonal(const DiscriminativeModel& model,
                                           const std::vector<Sample>& samples, int n_draws,
                                           std::uint64_t seed) {
    check(!samples.empty(), "fisher_diagonal: empty sample list");
    check(n_draws >= 1, "fisher_diagonal: n_draws must be >= 1");
    std::vector<double> fisher(model.params.size(), 0.0);
    std::vector<double> grad(model.params.size());
    std::vector<double> probs, dlogits;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::vector<double> logits = forward_logits(model, samples[i].features);
        probs = logits;
        softmax_inplace(probs);
        for (int t = 0; t < n_draws; ++t) {
            // inverse-CDF draw from the predictive distribution
            double u = counter_uniform(key_mix(seed, i, static_cast<std::uint64_t>(t)));
            int drawn = 0;
            double acc = 0.0;
            for (int k = 0; k < model.num_classes; ++k) {
                acc += probs[k];
                if (u <= acc) {
                    drawn = k;
                    break;
                }
                drawn = k;
            }
            dlogits = probs;
            dlogits[drawn] -= 1.0;
            std::fill(grad.begin(), grad.end(), 0.0);
            detail::backprop_sample(model, samples[i].features, dlogits, 1.0, grad);
            for (std::size_t j = 0; j < grad.size(); ++j) fisher[j] += grad[j] * grad[j];
        }
    }
    double norm = 1.0 / (static_cast<double>(samples.size()) * n_draws);
    for (double& f : fisher) f *= norm;
    return fisher;
}

struct SIState {
    std::vector<double> omega_accum;  // path integral within the current task
    std::vector<double> importance;   // consolidated Omega
    std::vector<double> anchor;       // parameters at the last consolidation
    std::vector<double> task_start;
    double lambda = 0.0;
    double damping = 0.1;
    bool has_anchor = false;
};

inline SIState make_si_state(std::size_t n_params, double lambda, double damping) {
    SIState s;
    s.omega_accum.assign(n_params, 0.0);
    s.importance.assign(n_params, 0.0);
    s.lambda = lambda;
    s.damping = damping;
    return s;
}

// per-step path integral: omega_j += -grad_j * delta_theta_j
inline void si_update(SIState& state, const StepInfo& step) {
    check(step.grad.size() == state.omega_accum.size(), "si_update: shape mismatch");
    for (std::size_t j = 0; j < state.omega_accum.size(); ++j)
        state.omega_accum[j] -= step.grad[j] * (step.params_after[j] - step.params_before[j]);
}

inline void si_begin_task(SIState& state, const std::vector<double>& params) {
    state.task_start = params;
    std::fill(state.omega_accum.begin(), state.omega_accum.end(), 0.0);
}

inline void si_consolidate(SIState& state, const std::vector<double>& params) {
    for (std::size_t j = 0; j < params.size(); ++j) {
        double delta = params[j] - state.task_start[j];
        double omega = state.omega_accum[j] / (delta * delta + state.damping);
        state.importance[j] += omega > 0.0 ? omega : 0.0;
    }
    state.anchor = params;
    state.has_anchor = true;
    std::fill(state.omega_accum.begin(), state.omega_accum.end(), 0.0);
}

// lambda * sum Omega_j (theta_j - theta*_j)^2
inline double si_penalty(const SIState& state, const std::vector<double>& params,
                         std::vector<double>* grad) {
    if (!state.has_anchor) return 0.0;
    check(state.anchor.size() == params.size(), "si_penalty: shape mismatch");
    double value = 0.0;
    for (std::size_t j = 0; j < params.size(); ++j) {
        double diff = params[j] - state.anchor[j];
        value += state.lambda * state.importance[j] * diff * diff;
        if (grad) (*grad)[j] += 2.0 * state.lambda * state.importance[j] * diff;
    }
    return value;
}

// alpha * CE(student, label) + (1-alpha) * tau^2 * KL(teacher || student)
// with both softmaxes tempered by tau and restricted to old-class logits.
// With no old classes this is plain cross-entropy.
inline LogitLoss distill_logit_loss(std::shared_ptr<const DiscriminativeModel> teacher, double tau,
                                    double alpha, std::vector<int> old_class_ids) {
    check(tau > 0.0, "distill: tau must be positive");
    check(alpha >= 0.0 && alpha <= 1.0, "distill: alpha must be in [0,1]");
    return [teacher, tau, alpha, old_class_ids](const std::vector<double>& logits, const Sample& s,
                                                std::vector<double>& dlogits) {
        dlogits = logits;
        softmax_inplace(dlogits);
        double ce = log_sum_exp(logits) - logits[s.label];
        dlogits[s.label] -= 1.0;
        for (double& g : dlogits) g *= alpha;
        double value = alpha * ce;
        if (!old_class_ids.empty()) {
            std::vector<double> t_logits = forward_logits(*teacher, s.features);
            std::vector<double> ps, pt;
            for (int k : old_class_ids) {
                ps.push_back(logits[k] / tau);
                pt.push_back(t_logits[k] / tau);
            }
            softmax_inplace(ps);
            softmax_inplace(pt);
            double kl = 0.0;
            for (std::size_t i = 0; i < ps.size(); ++i) kl += pt[i] * (std::log(pt[i]) - std::log(ps[i]));
            value += (1.0 - alpha) * tau * tau * kl;
            for (std::size_t i = 0; i < ps.size(); ++i)
                dlogits[old_class_ids[i]] += (1.0 - alpha) * tau * (ps[i] - pt[i]);
        }
        return value;
    };
}

// cross-entropy over the current task's logit subset only
inline LogitLoss labels_trick_logit_loss(std::vector<int> class_ids) {
    check(!class_ids.empty(), "labels_trick: empty class set");
    return [class_ids](const std::vector<double>& logits, const Sample& s,
                       std::vector<double>& dlogits) {
        dlogits.assign(logits.size(), 0.0);
        std::vector<double> sub;
        int y_sub = -1;
        for (std::size_t i = 0; i < class_ids.size(); ++i) {
            sub.push_back(logits[class_ids[i]]);
            if (class_ids[i] == s.label) y_sub = static_cast<int>(i);
        }
        check(y_sub >= 0, "labels_trick: label outside current task");
        double value = log_sum_exp(sub) - sub[y_sub];
        softmax_inplace(sub);
        sub[y_sub] -= 1.0;
        for (std::size_t i = 0; i < class_ids.size(); ++i) dlogits[class_ids[i]] = sub[i];
        return value;
    };
}

// ---- run records -------------------------------------------------------

struct TaskSnapshot {
    int tasks_seen = 0;
    double class_il_acc = 0.0;
    double task_il_acc = 0.0;               // mean over seen tasks
    std::vector<double> per_task_acc;       // task-IL accuracy per seen task
    BlockReport report_partition;           // full-loss decomposition (Lemma 1)
    BlockReport report_restricted;          // pair-restricted cross-entropy
    BlockReport report_confusion;           // 0/1 error mass split across blocks
    LossMatrix matrix_partition;            // discriminative runs only
    LossMatrix matrix_restricted;
    LossMatrix matrix_confusion;
    std::vector<double> diag_blocks;        // |P_ii| (restricted) or |Q_ii|, i < tasks_seen
    std::vector<double> q_diag;             // per-class mean NLL, generative runs only
};

struct RunRecord {
    std::string strategy;
    StrategyHyper hyper;
    std::uint64_t stream_seed = 0;
    std::uint64_t init_seed = 0;
    std::uint64_t train_seed = 0;
    std::uint64_t config_hash = 0;
    std::vector<TaskSnapshot> timeline;
    std::vector<CFRecord> cf;
    double final_class_il = 0.0;
    double final_task_il = 0.0;
    double tc = 0.0;             // off-diagonal total, restricted-pair view
    double cf_delta_sum = 0.0;
    bool aborted = false;
    std::string error;
};

namespace detail {

inline std::vector<int> seen_class_ids(const TaskStream& stream, int tasks_seen) {
    std::vector<int> ids;
    for (int t = 0; t < tasks_seen; ++t)
        ids.insert(ids.end(), stream.tasks[t].class_ids.begin(), stream.tasks[t].class_ids.end());
    return ids;
}

inline int restricted_argmax(const std::vector<double>& logits, const std::vector<int>& ids) {
    int best = ids[0];
    for (int k : ids)
        if (logits[k] > logits[best]) best = k;
    return best;
}

inline TaskSnapshot evaluate_discriminative(const DiscriminativeModel& model,
                                            const TaskStream& stream, int tasks_seen) {
    TaskSnapshot snap;
    snap.tasks_seen = tasks_seen;
    std::vector<int> seen = seen_class_ids(stream, tasks_seen);
    std::size_t correct = 0, total = 0;
    for (int t = 0; t < tasks_seen; ++t) {
        const Task& task = stream.tasks[t];
        std::size_t task_correct = 0;
        for (const auto& s : task.test) {
            std::vector<double> logits = forward_logits(model, s.features);
            if (restricted_argmax(logits, seen) == s.label) ++correct;
            if (restricted_argmax(logits, task.class_ids) == s.label) ++task_correct;
            ++total;
        }
        snap.per_task_acc.push_back(static_cast<double>(task_correct) / task.test.size());
    }
    snap.class_il_acc = static_cast<double>(correct) / static_cast<double>(total);
    double s = 0.0;
    for (double a : snap.per_task_acc) s += a;
    snap.task_il_acc = s / snap.per_task_acc.size();

    snap.matrix_partition = pairwise_matrix(model, stream, MatrixMode::partition);
    snap.matrix_restricted = pairwise_matrix(model, stream, MatrixMode::restricted_pair);
    snap.matrix_confusion =
        pairwise_matrix(model, stream, MatrixMode::partition, LossFn::zero_one());
    snap.report_partition = block_report(snap.matrix_partition);
    snap.report_restricted = block_report(snap.matrix_restricted);
    snap.report_confusion = block_report(snap.matrix_confusion);
    for (int i = 0; i < tasks_seen; ++i)
        snap.diag_blocks.push_back(snap.report_restricted.block(i, i));
    return snap;
}

template <typename ClassifyAll, typename ClassifyTask>
inline TaskSnapshot evaluate_generative(const TaskStream& stream, int tasks_seen,
                                        ClassifyAll classify_all, ClassifyTask classify_task) {
    TaskSnapshot snap;
    snap.tasks_seen = tasks_seen;
    std::size_t correct = 0, total = 0;
    for (int t = 0; t < tasks_seen; ++t) {
        const Task& task = stream.tasks[t];
        std::size_t task_correct = 0;
        for (const auto& s : task.test) {
            if (classify_all(s.features) == s.label) ++correct;
            if (classify_task(s.features, task.class_ids) == s.label) ++task_correct;
            ++total;
        }
        snap.per_task_acc.push_back(static_cast<double>(task_correct) / task.test.size());
    }
    snap.class_il_acc = static_cast<double>(correct) / static_cast<double>(total);
    double s = 0.0;
    for (double a : snap.per_task_acc) s += a;
    snap.task_il_acc = s / snap.per_task_acc.size();
    return snap;
}

inline void finalize_record(RunRecord& rec) {
    if (rec.timeline.empty()) return;
    const TaskSnapshot& last = rec.timeline.back();
    rec.final_class_il = last.class_il_acc;
    rec.final_task_il = last.task_il_acc;
    // decision-level score: cross-entropy magnitudes are calibration-
    // sensitive, so the headline number is the share of 0/1 error mass
    // sitting in cross-task blocks
    rec.tc = tc_score(last.report_confusion).value;
    std::vector<std::vector<double>> history;
    for (const auto& snap : rec.timeline) history.push_back(snap.diag_blocks);
    rec.cf = cf_records(history);
    rec.cf_delta_sum = 0.0;
    for (const auto& r : rec.cf) rec.cf_delta_sum += r.delta;
}

inline std::vector<Sample> samples_of_class(const TaskStream& stream, int task, int cls) {
    std::vector<Sample> out;
    for (const auto& s : stream.tasks[task].train)
        if (s.label == cls) out.push_back(s);
    return out;
}

// density used by generative replay: fitted on real data, the true blob
// density, or a deliberately corrupted version of it
inline GaussianClassModel replay_density(const TaskStream& stream, ReplaySurrogate surrogate,
                                         int tasks_done) {
    GaussianClassModel model =
        make_gaussian_model(stream.feature_dim, stream.num_classes(), CovMode::diagonal_per_class);
    if (surrogate == ReplaySurrogate::fitted) {
        for (int t = 0; t < tasks_done; ++t)
            for (int cls : stream.tasks[t].class_ids)
                fit_class(model, samples_of_class(stream, t, cls), cls);
        return model;
    }
    check(stream.blob_spec.has_value(), "replay oracle surrogate requires a blob stream");
    const BlobSpec& spec = *stream.blob_spec;
    const int d = stream.feature_dim;
    for (int t = 0; t < tasks_done; ++t) {
        for (int cls : stream.tasks[t].class_ids) {
            std::vector<double> mean = spec.centers[cls];
            if (surrogate == ReplaySurrogate::biased) {
                // shift every coordinate by 2 sigma with a per-class
                // pseudo-random sign pattern
                for (int j = 0; j < d; ++j) {
                    double u = counter_uniform(key_mix(0xb1a5ULL, static_cast<std::uint64_t>(cls),
                                                       static_cast<std::uint64_t>(j)));
                    mean[j] += (u < 0.5 ? -2.0 : 2.0) * spec.scale;
                }
            }
            model.means[cls] = std::move(mean);
            model.vars[cls].assign(d, std::max(spec.scale * spec.scale, model.var_floor));
            model.counts[cls] = 1.0;
            model.fitted[cls] = 1;
            ++model.version;
        }
    }
    return model;
}

}  // namespace detail

// Minibatch source mixing real current-task samples with replayed draws
// from the past-class densities.
inline BatchSource generative_replay_batches(const std::vector<Sample>& current,
                                             std::shared_ptr<const GaussianClassModel> densities,
                                             std::vector<int> past_classes, int batch_size,
                                             double replay_ratio, int classes_per_task,
                                             std::uint64_t seed) {
    for (int cls : past_classes)
        check(densities->fitted[cls], "generative_replay: unfitted past class");
    double ratio = replay_ratio;
    if (ratio < 0.0) {
        // proportional: past classes' share of all seen classes
        ratio = static_cast<double>(past_classes.size()) /
                static_cast<double>(past_classes.size() + classes_per_task);
    }
    int n_replay = past_classes.empty() ? 0 : static_cast<int>(std::lround(batch_size * ratio));
    if (n_replay >= batch_size) n_replay = batch_size - 1;
    BatchSource real = shuffled_batches(current, batch_size - n_replay, seed);
    return [=](int it) {
        std::vector<Sample> batch = real(it);
        for (int s = 0; s < n_replay; ++s) {
            std::uint64_t key = key_mix(seed, 0x5e97ULL, static_cast<std::uint64_t>(it),
                                        static_cast<std::uint64_t>(s));
            int cls = past_classes[splitmix64(key) % past_classes.size()];
            batch.push_back(sample_replay(*densities, cls, 1, key)[0]);
        }
        return batch;
    };
}

// ---- the sequential protocol -------------------------------------------

inline RunRecord run_strategy(StrategyKind kind, const TaskStream& stream,
                              const DiscriminativeModel& model_init, const StrategyHyper& hyper,
                              const TrainConfig& cfg) {
    RunRecord rec;
    rec.strategy = strategy_name(kind);
    rec.hyper = hyper;
    rec.stream_seed = stream.seed;
    rec.init_seed = model_init.init_seed;
    rec.train_seed = cfg.seed;

    const int T = stream.num_tasks;
    try {
        if (kind == StrategyKind::gen_classifier) {
            GaussianClassModel gen = make_gaussian_model(stream.feature_dim, stream.num_classes(),
                                                         CovMode::diagonal_per_class);
            for (int t = 0; t < T; ++t) {
                for (int cls : stream.tasks[t].class_ids)
                    fit_class(gen, detail::samples_of_class(stream, t, cls), cls);
                TaskSnapshot snap = detail::evaluate_generative(
                    stream, t + 1, [&](const std::vector<double>& x) { return bayes_classify(gen, x); },
                    [&](const std::vector<double>& x, const std::vector<int>& ids) {
                        return bayes_classify_restricted(gen, x, ids);
                    });
                QMatrix q = q_matrix_prefix(gen, stream, t + 1);
                snap.q_diag = q.diag;
                for (int i = 0; i <= t; ++i) snap.diag_blocks.push_back(q.task_block_sum(i));
                rec.timeline.push_back(std::move(snap));
            }
        } else if (kind == StrategyKind::slda) {
            SLDAState slda = make_slda(stream.feature_dim, stream.num_classes(), hyper.slda_shrinkage);
            for (int t = 0; t < T; ++t) {
                for (const auto& s : stream.tasks[t].train) slda_update(slda, s.features, s.label);
                TaskSnapshot snap = detail::evaluate_generative(
                    stream, t + 1, [&](const std::vector<double>& x) { return slda_classify(slda, x); },
                    [&](const std::vector<double>& x, const std::vector<int>& ids) {
                        return slda_classify_restricted(slda, x, ids);
                    });
                // shared-covariance NLL per seen task block keeps the CF ledger
                // comparable across generative runs
                for (int i = 0; i <= t; ++i) snap.diag_blocks.push_back(0.0);
                rec.timeline.push_back(std::move(snap));
            }
        } else if (kind == StrategyKind::joint) {
            // retrained from the same initialization on the union of tasks
            // seen so far, isolating the protocol from the init
            std::vector<Sample> pool;
            for (int t = 0; t < T; ++t) {
                pool.insert(pool.end(), stream.tasks[t].train.begin(), stream.tasks[t].train.end());
                DiscriminativeModel model = sgd_train(model_init, pool, cfg);
                rec.timeline.push_back(detail::evaluate_discriminative(model, stream, t + 1));
            }
        } else {
            DiscriminativeModel model = model_init;
            EWCState ewc;
            ewc.lambda = hyper.ewc_lambda;
            SIState si = make_si_state(model.params.size(), hyper.si_lambda, hyper.si_damping);
            std::shared_ptr<DiscriminativeModel> teacher;
            GaussianClassModel replay_model;

            for (int t = 0; t < T; ++t) {
                const Task& task = stream.tasks[t];
                TrainConfig task_cfg = cfg;
                task_cfg.seed = key_mix(cfg.seed, static_cast<std::uint64_t>(t));

                LogitLoss loss = cross_entropy_logit_loss();
                PenaltyHook penalty = nullptr;
                StepObserver observer = nullptr;
                BatchSource batches =
                    shuffled_batches(task.train, task_cfg.batch_size, task_cfg.seed);

                switch (kind) {
                    case StrategyKind::none_:
                        break;
                    case StrategyKind::ewc:
                        if (!ewc.anchors.empty())
                            penalty = [&ewc](const std::vector<double>& p, std::vector<double>& g) {
                                return ewc_penalty(ewc, p, &g);
                            };
                        break;
                    case StrategyKind::si:
                        si_begin_task(si, model.params);
                        penalty = [&si](const std::vector<double>& p, std::vector<double>& g) {
                            return si_penalty(si, p, &g);
                        };
                        observer = [&si](const StepInfo& step) { si_update(si, step); };
                        break;
                    case StrategyKind::distill:
                        if (teacher)
                            loss = distill_logit_loss(teacher, hyper.distill_tau,
                                                      hyper.distill_alpha,
                                                      detail::seen_class_ids(stream, t));
                        break;
                    case StrategyKind::labels_trick:
                        loss = labels_trick_logit_loss(task.class_ids);
                        break;
                    case StrategyKind::gen_replay: {
                        if (t > 0) {
                            auto densities = std::make_shared<GaussianClassModel>(
                                detail::replay_density(stream, hyper.surrogate, t));
                            batches = generative_replay_batches(
                                task.train, densities, detail::seen_class_ids(stream, t),
                                task_cfg.batch_size, hyper.replay_ratio, stream.classes_per_task,
                                task_cfg.seed);
                        }
                        break;
                    }
                    default:
                        throw std::runtime_error("run_strategy: unhandled strategy");
                }

                model = sgd_train_stream(std::move(model), task_cfg, batches, loss, penalty, observer);

                // post-task strategy bookkeeping
                if (kind == StrategyKind::ewc) {
                    EWCState::Anchor anchor;
                    anchor.params = model.params;
                    anchor.fisher = fisher_diagonal(model, task.train, hyper.fisher_draws,
                                                    key_mix(task_cfg.seed, 0xf15eULL));
                    ewc.anchors.push_back(std::move(anchor));
                } else if (kind == StrategyKind::si) {
                    si_consolidate(si, model.params);
                } else if (kind == StrategyKind::distill) {
                    teacher = std::make_shared<DiscriminativeModel>(model);
                }

                rec.timeline.push_back(detail::evaluate_discriminative(model, stream, t + 1));
            }
        }
    } catch (const std::exception& e) {
        rec.aborted = true;
        rec.error = e.what();
    }
    detail::finalize_record(rec);
    return rec;
}

// ---- serialization -----------------------------------------------------

inline std::string record_to_json(const RunRecord& rec) {
    std::ostringstream out;
    out << "{\"strategy\":\"" << rec.strategy << "\",\"stream_seed\":" << rec.stream_seed
        << ",\"init_seed\":" << rec.init_seed << ",\"train_seed\":" << rec.train_seed
        << ",\"config_hash\":" << rec.config_hash << ",\"aborted\":" << (rec.aborted ? "true" : "false");
    if (rec.aborted) out << ",\"error\":\"" << rec.error << "\"";
    out << ",\"final_class_il\":" << fmt_g10(rec.final_class_il)
        << ",\"final_task_il\":" << fmt_g10(rec.final_task_il) << ",\"tc_score\":" << fmt_g10(rec.tc)
        << ",\"cf_delta_sum\":" << fmt_g10(rec.cf_delta_sum) << ",\"cf\":[";
    for (std::size_t i = 0; i < rec.cf.size(); ++i) {
        if (i) out << ",";
        out << "{\"task\":" << rec.cf[i].task << ",\"before\":" << fmt_g10(rec.cf[i].loss_before)
            << ",\"after\":" << fmt_g10(rec.cf[i].loss_after)
            << ",\"delta\":" << fmt_g10(rec.cf[i].delta) << "}";
    }
    out << "],\"timeline\":[";
    for (std::size_t t = 0; t < rec.timeline.size(); ++t) {
        const TaskSnapshot& s = rec.timeline[t];
        if (t) out << ",";
        out << "{\"tasks_seen\":" << s.tasks_seen << ",\"class_il\":" << fmt_g10(s.class_il_acc)
            << ",\"task_il\":" << fmt_g10(s.task_il_acc) << ",\"per_task\":[";
        for (std::size_t i = 0; i < s.per_task_acc.size(); ++i) {
            if (i) out << ",";
            out << fmt_g10(s.per_task_acc[i]);
        }
        out << "],\"diag_blocks\":[";
        for (std::size_t i = 0; i < s.diag_blocks.size(); ++i) {
            if (i) out << ",";
            out << fmt_g10(s.diag_blocks[i]);
        }
        out << "]";
        if (s.report_partition.num_tasks > 0)
            out << ",\"report_partition\":" << report_to_json(s.report_partition)
                << ",\"report_restricted\":" << report_to_json(s.report_restricted)
                << ",\"report_confusion\":" << report_to_json(s.report_confusion);
        if (!s.q_diag.empty()) {
            out << ",\"q_diag\":[";
            for (std::size_t i = 0; i < s.q_diag.size(); ++i) {
                if (i) out << ",";
                out << fmt_g10(s.q_diag[i]);
            }
            out << "]";
        }
        out << "}";
    }
    out << "]}";
    return out.str();
}

}  // namespace lossmat

#endif
