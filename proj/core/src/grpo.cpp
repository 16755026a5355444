#include "promptcal/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "parallel.hpp"
#include "promptcal/eval.hpp"
#include "promptcal/rng.hpp"
#include "promptcal/text.hpp"

namespace promptcal {

namespace fs = std::filesystem;

void GrpoConfig::validate() const {
    if (group_size < 2) throw ConfigError("grpo: group_size must be >= 2");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0))
        throw ConfigError("grpo: clip_epsilon must be in (0,1)");
    if (!(learning_rate > 0.0)) throw ConfigError("grpo: learning_rate must be > 0");
    if (beta < 0.0) throw ConfigError("grpo: beta must be >= 0");
    if (inner_iterations < 1) throw ConfigError("grpo: inner_iterations must be >= 1");
    if (batch_queries < 1) throw ConfigError("grpo: batch_queries must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("grpo: weight_decay must be >= 0");
    if (max_workers < 1) throw ConfigError("grpo: max_workers must be >= 1");
}

std::vector<double> compute_advantages(const std::vector<double>& rewards, bool normalize_std) {
    if (rewards.size() < 2)
        throw SizeError("advantages need at least 2 rewards, got " +
                        std::to_string(rewards.size()));
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());

    std::vector<double> adv(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;

    if (normalize_std) {
        double var = 0.0;
        for (double a : adv) var += a * a;
        const double sd = std::max(std::sqrt(var / static_cast<double>(adv.size())), 1e-8);
        for (double& a : adv) a /= sd;
    }
    return adv;
}

RolloutGroup collect_group(const SoftmaxPolicy& policy, const Query& query, Backend& downstream,
                           const InstructionTemplate& tmpl, const GenerationParams& params,
                           const RewardConfig& reward_cfg, const GrpoConfig& cfg,
                           std::uint64_t group_seed, const RetryPolicy& retry) {
    std::exception_ptr last_error;
    for (std::size_t attempt = 0; attempt <= cfg.group_retry_budget; ++attempt) {
        const std::uint64_t attempt_seed = hash_mix(group_seed, 0xA77E3B97ULL + attempt);
        try {
            RolloutGroup group;
            group.query_id = query.id;
            group.features = extract_features(query, policy.feature_config());
            group.samples.reserve(cfg.group_size);
            std::vector<double> rewards;
            rewards.reserve(cfg.group_size);

            for (std::size_t g = 0; g < cfg.group_size; ++g) {
                const SampledCgp sampled =
                    policy.sample(query, policy.sample_temperature, hash_mix(attempt_seed, 2 * g));
                GenerationParams call_params = params;
                call_params.seed = hash_mix(attempt_seed, 2 * g + 1);
                // parse-invalid outputs stay in the group: Eq-style format
                // penalty must flow into the advantages
                const Prediction pred =
                    answer_query(downstream, query, sampled.cgp, tmpl, call_params, retry);
                const double reward = compute_reward(pred, query.truth_index, reward_cfg);
                rewards.push_back(reward);
                group.samples.push_back(RolloutSample{sampled.action_index, sampled.cgp,
                                                      sampled.log_prob, pred, reward, 0.0});
            }

            const std::vector<double> adv = compute_advantages(rewards, cfg.normalize_std);
            for (std::size_t g = 0; g < cfg.group_size; ++g) group.samples[g].advantage = adv[g];
            return group;
        } catch (const TransportError&) {
            last_error = std::current_exception();
        } catch (const HttpStatusError&) {
            last_error = std::current_exception();
        }
    }
    std::rethrow_exception(last_error);
}

UpdateStats grpo_step(SoftmaxPolicy& policy, const std::vector<RolloutGroup>& groups,
                      const GrpoConfig& cfg, AdamState* adam) {
    cfg.validate();
    if (groups.empty()) throw SizeError("grpo_step: no rollout groups");

    std::size_t n_samples = 0;
    double reward_sum = 0.0;
    for (const auto& g : groups) {
        n_samples += g.samples.size();
        for (const auto& s : g.samples) reward_sum += s.reward;
    }
    if (n_samples == 0) throw SizeError("grpo_step: empty groups");
    const double inv_n = 1.0 / static_cast<double>(n_samples);

    const std::size_t n_w = policy.weights().size();
    if (adam && adam->m.empty()) {
        adam->m.assign(n_w, 0.0);
        adam->v.assign(n_w, 0.0);
    }

    double kl_accum = 0.0, clip_accum = 0.0, last_loss = 0.0;
    std::vector<double> grad(n_w);

    for (std::size_t iter = 0; iter < cfg.inner_iterations; ++iter) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double surrogate_sum = 0.0;
        double kl_sum = 0.0;
        std::size_t clipped_count = 0;

        for (const auto& group : groups) {
            for (const auto& s : group.samples) {
                auto [lp_new, glp] = policy.log_prob_and_grad(group.features, s.action_index);
                const double rho = std::exp(lp_new - s.log_prob_old);
                const double unclipped = rho * s.advantage;
                const double clipped =
                    std::clamp(rho, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * s.advantage;
                if (unclipped <= clipped) {
                    surrogate_sum += unclipped;
                    const double coeff = s.advantage * rho;
                    for (std::size_t j = 0; j < n_w; ++j) grad[j] += coeff * glp[j];
                } else {
                    // clip active: constant branch, no gradient
                    surrogate_sum += clipped;
                    ++clipped_count;
                }
            }
            auto [kl, gkl] = policy.kl_and_grad_to_reference(group.features);
            const double weight = static_cast<double>(group.samples.size());
            kl_sum += kl * weight;
            if (cfg.beta != 0.0)
                for (std::size_t j = 0; j < n_w; ++j) grad[j] -= cfg.beta * weight * gkl[j];
        }

        const double objective = (surrogate_sum - cfg.beta * kl_sum) * inv_n;
        if (!std::isfinite(objective))
            throw DivergenceError("grpo_step: non-finite objective at inner iteration " +
                                  std::to_string(iter) + " (surrogate " +
                                  fmt_double(surrogate_sum) + ", kl " + fmt_double(kl_sum) + ")");

        auto& w = policy.mutable_weights();
        if (adam) {
            adam->t += 1;
            const double bc1 = 1.0 - std::pow(adam->beta1, static_cast<double>(adam->t));
            const double bc2 = 1.0 - std::pow(adam->beta2, static_cast<double>(adam->t));
            for (std::size_t j = 0; j < n_w; ++j) {
                const double gj = grad[j] * inv_n;
                adam->m[j] = adam->beta1 * adam->m[j] + (1.0 - adam->beta1) * gj;
                adam->v[j] = adam->beta2 * adam->v[j] + (1.0 - adam->beta2) * gj * gj;
                w[j] += cfg.learning_rate * (adam->m[j] / bc1) /
                        (std::sqrt(adam->v[j] / bc2) + adam->eps);
            }
        } else {
            for (std::size_t j = 0; j < n_w; ++j) w[j] += cfg.learning_rate * grad[j] * inv_n;
        }
        if (cfg.weight_decay > 0.0)
            for (double& wj : w) wj *= 1.0 - cfg.learning_rate * cfg.weight_decay;

        kl_accum += kl_sum * inv_n;
        clip_accum += static_cast<double>(clipped_count) * inv_n;
        last_loss = -objective;
    }

    UpdateStats stats;
    stats.mean_reward = reward_sum * inv_n;
    stats.mean_kl = kl_accum / static_cast<double>(cfg.inner_iterations);
    stats.clip_fraction = clip_accum / static_cast<double>(cfg.inner_iterations);
    stats.loss = last_loss;
    return stats;
}

namespace {

std::vector<std::size_t> epoch_order(const Dataset& data, std::uint64_t seed, std::size_t epoch) {
    struct Keyed {
        std::uint64_t key;
        std::size_t index;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(data.size());
    const std::uint64_t epoch_seed = derive_seed(seed, "epoch", epoch);
    for (std::size_t i = 0; i < data.size(); ++i)
        keyed.push_back({hash_mix(epoch_seed, fnv1a64(data.records[i].id)), i});
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        if (a.key != b.key) return a.key < b.key;
        return a.index < b.index;
    });
    std::vector<std::size_t> order;
    order.reserve(keyed.size());
    for (const auto& k : keyed) order.push_back(k.index);
    return order;
}

std::string curve_row(const RewardCurvePoint& p) {
    return std::to_string(p.step) + "," + fmt_double(p.mean_reward) + "," + fmt_double(p.mean_kl) +
           "," + fmt_double(p.clip_fraction) + "\n";
}

}  // namespace

TrainingArtifacts train(const TrainSetup& setup) {
    if (!setup.policy || !setup.downstream || !setup.train_data)
        throw ConfigError("train: policy, downstream backend and train data must be set");
    setup.grpo.validate();
    setup.reward.validate();
    setup.params.validate();
    setup.tmpl.validate();
    if (setup.train_data->empty()) throw EmptyError("train: empty training dataset");
    if (setup.grpo.eval_every > 0 && (!setup.val_data || setup.val_data->empty()))
        throw ConfigError("train: eval_every > 0 requires a validation split");

    SoftmaxPolicy& policy = *setup.policy;
    const GrpoConfig& cfg = setup.grpo;

    TrainingArtifacts artifacts;
    artifacts.run_dir = setup.run_dir;

    std::ofstream curve_file;
    if (!setup.run_dir.empty()) {
        fs::create_directories(setup.run_dir);
        if (!setup.config_snapshot.empty()) {
            std::ofstream snap(fs::path(setup.run_dir) / "config.snapshot", std::ios::binary);
            snap << setup.config_snapshot;
        }
        curve_file.open(fs::path(setup.run_dir) / "reward_curve.csv", std::ios::binary);
        if (!curve_file) throw IoError("cannot write reward_curve.csv in '" + setup.run_dir + "'");
        curve_file << "step,mean_reward,mean_kl,clip_fraction\n";
        curve_file.flush();
    }

    AdamState adam_state;
    AdamState* adam = cfg.optimizer == GrpoConfig::Optimizer::Adam ? &adam_state : nullptr;

    std::size_t epoch = 0;
    std::size_t cursor = 0;
    std::vector<std::size_t> order = epoch_order(*setup.train_data, cfg.seed, epoch);

    for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
        std::vector<const Query*> batch;
        batch.reserve(cfg.batch_queries);
        while (batch.size() < cfg.batch_queries) {
            if (cursor >= order.size()) {
                ++epoch;
                cursor = 0;
                order = epoch_order(*setup.train_data, cfg.seed, epoch);
            }
            batch.push_back(&setup.train_data->records[order[cursor++]]);
        }

        std::vector<RolloutGroup> groups(batch.size());
        detail::parallel_for(batch.size(), cfg.max_workers, [&](std::size_t i) {
            const std::uint64_t group_seed =
                derive_seed(cfg.seed, "group", step, fnv1a64(batch[i]->id));
            groups[i] = collect_group(policy, *batch[i], *setup.downstream, setup.tmpl,
                                      setup.params, setup.reward, cfg, group_seed, setup.retry);
        });

        const UpdateStats stats = grpo_step(policy, groups, cfg, adam);
        const RewardCurvePoint point{step, stats.mean_reward, stats.mean_kl, stats.clip_fraction};
        artifacts.reward_curve.push_back(point);
        if (curve_file.is_open()) {
            curve_file << curve_row(point);
            curve_file.flush();  // partial artifacts survive an abort
        }

        if (cfg.reference_refresh_every > 0 && step % cfg.reference_refresh_every == 0)
            policy.snapshot_reference();

        if (cfg.eval_every > 0 && step % cfg.eval_every == 0) {
            EvalSettings eval_settings;
            eval_settings.seed = derive_seed(cfg.seed, "train-eval", step);
            eval_settings.max_workers = cfg.max_workers;
            const auto records = run_policy_eval(&policy, *setup.val_data, *setup.downstream,
                                                 setup.tmpl, setup.params, setup.retry,
                                                 eval_settings);
            CalibrationReport report = slice_report(records, setup.conf_threshold,
                                                    setup.metric_bins, 0, "learned");
            report.meta["step"] = std::to_string(step);
            if (!setup.run_dir.empty())
                save_report(report, (fs::path(setup.run_dir) /
                                     ("eval_step_" + std::to_string(step) + ".json"))
                                        .string());
            artifacts.eval_reports.emplace_back(step, std::move(report));
        }
    }

    if (!setup.run_dir.empty()) {
        artifacts.checkpoint_path = (fs::path(setup.run_dir) / "checkpoint.json").string();
        policy.save_checkpoint_file(artifacts.checkpoint_path);
    }
    return artifacts;
}

}  // namespace promptcal
