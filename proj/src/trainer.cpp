#include "microseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "microseg/eval.hpp"
#include "microseg/kernels.hpp"
#include "microseg/remodel.hpp"

namespace microseg {

Variant parse_variant(const std::string& s) {
    if (s == "baseline") return Variant::baseline;
    if (s == "no_remodel") return Variant::no_remodel;
    if (s == "no_micro") return Variant::no_micro;
    if (s == "full") return Variant::full;
    if (s == "full_memory") return Variant::full_memory;
    throw std::invalid_argument("unknown variant: " + s);
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::baseline: return "baseline";
        case Variant::no_remodel: return "no_remodel";
        case Variant::no_micro: return "no_micro";
        case Variant::full: return "full";
        default: return "full_memory";
    }
}

ScenarioSpec RunConfig::scenario() const {
    std::vector<ClassId> order;
    if (order_seed) order = shuffled_class_order(num_classes, *order_seed);
    if (!step_sizes.empty()) return build_scenario_explicit(num_classes, step_sizes, mode, order);
    return build_scenario(num_classes, notation, mode, order);
}

int RunConfig::effective_k() const {
    if (variant == Variant::baseline || variant == Variant::no_micro) return 1;
    return unseen_k;
}

bool RunConfig::uses_pseudo_labels() const {
    return variant == Variant::no_micro || variant == Variant::full ||
           variant == Variant::full_memory;
}

bool RunConfig::uses_contrastive() const {
    return (variant == Variant::no_remodel || variant == Variant::full ||
            variant == Variant::full_memory) &&
           effective_k() > 1;
}

bool RunConfig::dense_branch_only() const { return variant == Variant::baseline; }

RunConfig read_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    RunConfig c;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line is not key=value: " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "num_classes") c.num_classes = std::stoi(value);
        else if (key == "notation") c.notation = value;
        else if (key == "step_sizes") {
            std::stringstream ss(value);
            std::string tok;
            c.step_sizes.clear();
            while (std::getline(ss, tok, ',')) c.step_sizes.push_back(std::stoi(tok));
        } else if (key == "mode") c.mode = parse_mode(value);
        else if (key == "order_seed") c.order_seed = std::stoull(value);
        else if (key == "dataset_dir") c.dataset_dir = value;
        else if (key == "dataset_seed") c.dataset_seed = std::stoull(value);
        else if (key == "num_train") c.num_train = std::stoi(value);
        else if (key == "num_val") c.num_val = std::stoi(value);
        else if (key == "height") c.height = std::stoi(value);
        else if (key == "width") c.width = std::stoi(value);
        else if (key == "in_channels") c.model.in_channels = std::stoi(value);
        else if (key == "feature_channels") c.model.feature_channels = std::stoi(value);
        else if (key == "depth") c.model.depth = std::stoi(value);
        else if (key == "kernel_size") c.model.kernel_size = std::stoi(value);
        else if (key == "k") c.unseen_k = std::stoi(value);
        else if (key == "tau") c.tau = std::stod(value);
        else if (key == "lambda") c.lambda = std::stod(value);
        else if (key == "proposal_mode") {
            if (value == "grid") c.proposal_mode = ProposalGen::grid;
            else if (value == "oracle") c.proposal_mode = ProposalGen::oracle;
            else throw std::runtime_error("unknown proposal_mode: " + value);
        } else if (key == "grid_tiles_y") c.grid_tiles_y = std::stoi(value);
        else if (key == "grid_tiles_x") c.grid_tiles_x = std::stoi(value);
        else if (key == "oracle_max_n") c.oracle_max_n = std::stoi(value);
        else if (key == "fixed_n") c.fixed_n = std::stoi(value);
        else if (key == "learning_rate") c.learning_rate = std::stod(value);
        else if (key == "incremental_lr_scale") c.incremental_lr_scale = std::stod(value);
        else if (key == "momentum") c.momentum = std::stod(value);
        else if (key == "weight_decay") c.weight_decay = std::stod(value);
        else if (key == "epochs_per_step") c.epochs_per_step = std::stoi(value);
        else if (key == "batch_size") c.batch_size = std::stoi(value);
        else if (key == "memory_capacity") c.memory_capacity = std::stoi(value);
        else if (key == "seed") c.seed = std::stoull(value);
        else if (key == "variant") c.variant = parse_variant(value);
        else throw std::runtime_error("unknown config key: " + key);
    }
    if (c.unseen_k < 1) throw std::runtime_error("k must be >= 1");
    if (c.tau <= 0.0 || c.tau >= 1.0) throw std::runtime_error("tau must lie in (0,1)");
    if (c.learning_rate < 0.0) throw std::runtime_error("learning_rate must be >= 0");
    return c;
}

ParamGrads ParamGrads::zeros_like(const ModelState& s) {
    ParamGrads g;
    for (const Tensor& w : s.conv_weights) g.conv_w.emplace_back(w.shape);
    for (const Tensor& b : s.conv_biases) g.conv_b.emplace_back(b.shape);
    g.dense_w = Tensor(s.dense_weight.shape);
    g.dense_b = Tensor(s.dense_bias.shape);
    g.prop_w = Tensor(s.prop_weight.shape);
    g.prop_b = Tensor(s.prop_bias.shape);
    return g;
}

void ParamGrads::accumulate(const ParamGrads& o, double scale) {
    for (std::size_t l = 0; l < conv_w.size(); ++l) {
        conv_w[l].add_scaled(o.conv_w[l], scale);
        conv_b[l].add_scaled(o.conv_b[l], scale);
    }
    dense_w.add_scaled(o.dense_w, scale);
    dense_b.add_scaled(o.dense_b, scale);
    prop_w.add_scaled(o.prop_w, scale);
    prop_b.add_scaled(o.prop_b, scale);
}

namespace {

inline double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

LossBreakdown sample_loss_and_grads(const ModelState& state, const std::vector<float>& image,
                                    int channels, int height, int width,
                                    const ProposalSet& proposals,
                                    const RemodeledLabel& remodeled, int t, double lambda,
                                    bool use_dense, bool use_proposal, bool use_contrastive,
                                    ParamGrads* grads) {
    FeatureTrace trace;
    const Tensor features = extract_features(state, image, channels, height, width, &trace);
    const std::size_t c = features.dim(0);
    const std::size_t q = features.dim(1) * features.dim(2);
    const std::size_t seen = state.registry.size();
    const int k = state.unseen_slots;

    Tensor gfeat(features.shape);
    LossBreakdown out;
    out.lambda = lambda;
    double contrastive = 0.0;

    if (use_proposal) {
        const PrototypeMatrix pm = masked_average_pool(features, proposals);
        const Tensor plogits = classify_prototypes(state, pm);
        const Tensor pixel_p = reorganize(plogits, proposals);
        Tensor grad_pix;
        out.bce_proposal =
            bce_loss(pixel_p, remodeled, state.registry, k, grads ? &grad_pix : nullptr);
        if (use_contrastive && k > 1) {
            Tensor maps({static_cast<std::size_t>(k), features.dim(1), features.dim(2)});
            for (int s = 0; s < k; ++s)
                for (std::size_t p = 0; p < q; ++p)
                    maps.data[static_cast<std::size_t>(s) * q + p] =
                        sigmoid(pixel_p.data[(seen + s) * q + p]);
            Tensor gmaps;
            contrastive = contrastive_loss(maps, grads ? &gmaps : nullptr);
            if (grads) {
                for (int s = 0; s < k; ++s)
                    for (std::size_t p = 0; p < q; ++p) {
                        const double v = maps.data[static_cast<std::size_t>(s) * q + p];
                        grad_pix.data[(seen + s) * q + p] +=
                            lambda * gmaps.data[static_cast<std::size_t>(s) * q + p] * v *
                            (1.0 - v);
                    }
            }
        }
        if (grads) {
            const Tensor gprop =
                kernels::reorganize_backward(grad_pix, proposals.masks.data(), proposals.n);
            const std::size_t out_ch = state.out_channels();
            Tensor gproto({proposals.n, c});
            for (std::size_t n = 0; n < proposals.n; ++n)
                for (std::size_t o = 0; o < out_ch; ++o) {
                    const double g = gprop.at(n, o);
                    if (g == 0.0) continue;
                    grads->prop_b[o] += g;
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        grads->prop_w.at(o, ch) += g * pm.values.at(n, ch);
                        gproto.at(n, ch) += g * state.prop_weight.at(o, ch);
                    }
                }
            gfeat.add_scaled(kernels::masked_average_pool_backward(
                                 gproto, proposals.masks.data(), proposals.n, c,
                                 features.dim(1), features.dim(2)),
                             1.0);
        }
    }

    if (use_dense) {
        const Tensor pixel_d = dense_predict(state, features);
        Tensor grad_pix;
        out.bce_dense =
            bce_loss(pixel_d, remodeled, state.registry, k, grads ? &grad_pix : nullptr);
        if (grads) {
            const std::size_t out_ch = state.out_channels();
            for (std::size_t o = 0; o < out_ch; ++o)
                for (std::size_t p = 0; p < q; ++p) {
                    const double g = grad_pix.data[o * q + p];
                    if (g == 0.0) continue;
                    grads->dense_b[o] += g;
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        grads->dense_w.at(o, ch) += g * features.data[ch * q + p];
                        gfeat.data[ch * q + p] += g * state.dense_weight.at(o, ch);
                    }
                }
        }
    }

    if (grads && !state.frozen_extractor) {
        Tensor d = std::move(gfeat);
        for (int l = static_cast<int>(state.conv_weights.size()) - 1; l >= 0; --l) {
            const Tensor& act = trace.activations[l];
            Tensor dz(d.shape);
            for (std::size_t i = 0; i < d.data.size(); ++i)
                dz.data[i] = d.data[i] * (1.0 - act.data[i] * act.data[i]);
            Tensor input_l;
            if (l == 0) {
                input_l = Tensor({static_cast<std::size_t>(channels),
                                  static_cast<std::size_t>(height),
                                  static_cast<std::size_t>(width)});
                for (std::size_t i = 0; i < input_l.data.size(); ++i)
                    input_l.data[i] = static_cast<double>(image[i]);
            } else {
                input_l = trace.activations[l - 1];
            }
            kernels::conv2d_backward_params(dz, input_l, grads->conv_w[l], grads->conv_b[l]);
            if (l > 0) d = kernels::conv2d_backward_input(dz, state.conv_weights[l]);
        }
    }

    out.contrastive = contrastive;
    double branch = 0.0;
    if (use_proposal) branch += out.bce_proposal;
    if (use_dense) branch += *out.bce_dense;
    out.total = branch + lambda * contrastive;
    (void)t;
    return out;
}

namespace {

void sgd_tensor(Tensor& w, const Tensor& g, Tensor& v, const SgdState& opt) {
    for (std::size_t i = 0; i < w.data.size(); ++i) {
        v.data[i] = opt.momentum * v.data[i] -
                    opt.learning_rate * (g.data[i] + opt.weight_decay * w.data[i]);
        w.data[i] += v.data[i];
    }
}

}  // namespace

void sgd_update(ModelState& state, const ParamGrads& grads, SgdState& opt) {
    if (!state.frozen_extractor)
        for (std::size_t l = 0; l < state.conv_weights.size(); ++l) {
            sgd_tensor(state.conv_weights[l], grads.conv_w[l], opt.velocity.conv_w[l], opt);
            sgd_tensor(state.conv_biases[l], grads.conv_b[l], opt.velocity.conv_b[l], opt);
        }
    sgd_tensor(state.dense_weight, grads.dense_w, opt.velocity.dense_w, opt);
    sgd_tensor(state.dense_bias, grads.dense_b, opt.velocity.dense_b, opt);
    sgd_tensor(state.prop_weight, grads.prop_w, opt.velocity.prop_w, opt);
    sgd_tensor(state.prop_bias, grads.prop_b, opt.velocity.prop_b, opt);
}

namespace {

using ProposalMap = std::map<std::string, ProposalSet>;

ProposalSet make_proposals(const RunConfig& cfg, const SegSample& s) {
    ProposalSet set;
    if (cfg.proposal_mode == ProposalGen::grid)
        set = generate_grid_proposals(s.height, s.width, cfg.grid_tiles_y, cfg.grid_tiles_x);
    else
        set = generate_oracle_proposals(s.mask, s.height, s.width, cfg.oracle_max_n);
    if (cfg.fixed_n > 0) pad_proposals(set, static_cast<std::size_t>(cfg.fixed_n));
    return set;
}

void load_dataset(const RunConfig& cfg, std::vector<SegSample>& train,
                  std::vector<SegSample>& val) {
    if (!cfg.dataset_dir.empty()) {
        train = read_dataset(cfg.dataset_dir + "/train", "train_");
        val = read_dataset(cfg.dataset_dir + "/val", "val_");
        return;
    }
    SyntheticConfig sc;
    sc.seed = cfg.dataset_seed;
    sc.num_classes = cfg.num_classes;
    sc.num_train = cfg.num_train;
    sc.num_val = cfg.num_val;
    sc.height = cfg.height;
    sc.width = cfg.width;
    generate_synthetic_dataset(sc, train, val);
}

StepMetrics evaluate_state(const ModelState& state, const std::vector<SegSample>& val,
                           const ProposalMap& proposals, const ScenarioSpec& spec, int t,
                           bool dense_only) {
    const auto seen = spec.seen_classes(t);
    const std::set<ClassId> seen_set(seen.begin(), seen.end());
    ConfusionMatrix conf(seen);
    for (const SegSample& s : val) {
        std::vector<std::uint8_t> gt = s.mask;
        for (std::uint8_t& v : gt)
            if (!seen_set.count(v)) v = kBackground;
        std::vector<std::uint8_t> pred;
        if (dense_only) {
            const Tensor features =
                extract_features(state, s.image, s.channels, s.height, s.width);
            pred = decode_logits(state, dense_predict(state, features), true);
        } else {
            pred = inference(state, s.image, s.channels, s.height, s.width,
                             proposals.at(s.sample_id), true);
        }
        accumulate(conf, pred, gt);
    }
    const auto base_vec = spec.step_classes(1);
    std::set<ClassId> base(base_vec.begin(), base_vec.end());
    std::set<ClassId> novel;
    for (ClassId c : seen)
        if (!base.count(c)) novel.insert(c);
    const MiouReport rep = miou(conf, base, novel);
    StepMetrics m;
    m.step = t;
    m.base_miou = rep.base_miou;
    m.novel_miou = rep.novel_miou;
    m.all_miou = rep.all_miou;
    m.per_class = rep.per_class_iou;
    return m;
}

void write_summary_rows(std::ofstream& f, const StepMetrics& m) {
    for (const auto& [cls, iou] : m.per_class)
        f << m.step << "," << cls << "," << format_float(iou) << "\n";
    f << m.step << ",base_mIoU," << format_float(m.base_miou) << "\n";
    f << m.step << ",novel_mIoU," << format_float(m.novel_miou) << "\n";
    f << m.step << ",all_mIoU," << format_float(m.all_miou) << "\n";
}

RunResult run_impl(const RunConfig& cfg, const ScenarioSpec& spec, int epochs_per_step,
                   const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    std::vector<SegSample> train, val;
    load_dataset(cfg, train, val);

    // The generator is frozen, so proposals are computed once per sample.
    ProposalMap proposals;
    for (const SegSample& s : train) proposals.emplace(s.sample_id, make_proposals(cfg, s));
    for (const SegSample& s : val) proposals.emplace(s.sample_id, make_proposals(cfg, s));
    std::map<std::string, const SegSample*> by_id;
    for (const SegSample& s : train) by_id[s.sample_id] = &s;

    std::ofstream metrics(out_dir + "/metrics.csv");
    metrics << "step,epoch,batch,loss_total,loss_bce_p,loss_bce_d,loss_contrastive\n";
    std::ofstream summary(out_dir + "/summary.csv");
    summary << "step,class_id,iou\n";
    std::ofstream manifest(out_dir + "/checkpoints.txt");
    {
        std::ofstream info(out_dir + "/run_info.txt");
        info << "variant " << variant_name(cfg.variant) << "\n";
        info << "seed " << cfg.seed << "\n";
        info << "mode " << mode_name(spec.mode) << "\n";
    }

    const int k = cfg.effective_k();
    const double init_scale = 1.0 / std::sqrt(static_cast<double>(cfg.model.feature_channels));
    std::mt19937_64 rng(cfg.seed);

    MemoryBuffer buffer;
    buffer.capacity = static_cast<std::size_t>(std::max(0, cfg.memory_capacity));
    buffer.rng_seed = cfg.seed;
    const bool memory_on = cfg.variant == Variant::full_memory && cfg.memory_capacity > 0;

    ModelState state;
    ModelState prev_state;
    std::vector<std::string> historical_ids;  // samples trained on so far
    RunResult result;
    result.out_dir = out_dir;

    for (int t = 1; t <= spec.num_steps(); ++t) {
        StepDataset step_data = filter_step_dataset(train, spec, t);
        std::set<std::string> memory_ids;

        if (t == 1) {
            state = init_model(cfg.model, spec.step_classes(1), k, rng);
        } else {
            prev_state = state;
            // Extractor trains only at step 1; later steps adapt the heads.
            state = freeze_extractor(std::move(state));
            state = expand_head(state, spec.step_classes(t), init_scale, rng);
        }
        state.step = t;

        StepDataset merged = step_data;
        if (memory_on && t >= 2) {
            const auto seen_prev = spec.seen_classes(t - 1);
            const std::set<ClassId> seen_prev_set(seen_prev.begin(), seen_prev.end());
            std::vector<SegSample> candidates;
            for (const std::string& id : historical_ids) {
                SegSample s = *by_id.at(id);
                for (std::uint8_t& v : s.mask)
                    if (!seen_prev_set.count(v)) v = kBackground;
                candidates.push_back(std::move(s));
            }
            buffer = update_memory(buffer, candidates, seen_prev, buffer.capacity, t);
            merged = merge_for_training(step_data, buffer, t);
            for (const MemoryEntry& e : buffer.entries) memory_ids.insert(e.sample.sample_id);
        }
        for (const SegSample& s : step_data.samples) historical_ids.push_back(s.sample_id);
        std::sort(historical_ids.begin(), historical_ids.end());
        historical_ids.erase(std::unique(historical_ids.begin(), historical_ids.end()),
                             historical_ids.end());

        // Per-sample supervision is fixed for the whole step: pseudo-labels
        // come from the frozen previous snapshot.
        const std::set<ClassId> cur_set(step_data.current_classes.begin(),
                                        step_data.current_classes.end());
        const auto seen_now = spec.seen_classes(t);
        const std::set<ClassId> seen_set(seen_now.begin(), seen_now.end());
        std::vector<RemodeledLabel> labels(merged.samples.size());
        for (std::size_t i = 0; i < merged.samples.size(); ++i) {
            const SegSample& s = merged.samples[i];
            PseudoLabelMap pl;
            const PseudoLabelMap* pl_ptr = nullptr;
            if (t >= 2 && cfg.uses_pseudo_labels()) {
                pl = pseudo_labels(prev_state, s.image, s.channels, s.height, s.width,
                                   proposals.at(s.sample_id));
                pl_ptr = &pl;
            }
            const bool is_memory = memory_ids.count(s.sample_id) > 0;
            labels[i] = remodel_labels(s.mask, s.height, s.width, pl_ptr,
                                       is_memory ? seen_set : cur_set, cfg.tau);
        }

        const bool dense_only = cfg.dense_branch_only();
        const bool use_dense = dense_only || t == 1;
        const bool use_prop = !dense_only;
        const bool use_contrastive = cfg.uses_contrastive();

        SgdState opt;
        opt.velocity = ParamGrads::zeros_like(state);
        // Incremental steps see far fewer samples than step 1; a reduced rate
        // keeps the head rows from overshooting on the small pool.
        opt.learning_rate =
            t == 1 ? cfg.learning_rate : cfg.learning_rate * cfg.incremental_lr_scale;
        opt.momentum = cfg.momentum;
        opt.weight_decay = cfg.weight_decay;

        std::vector<std::size_t> order(merged.samples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

        for (int epoch = 1; epoch <= epochs_per_step; ++epoch) {
            std::mt19937_64 erng(cfg.seed ^ (static_cast<std::uint64_t>(t) * 1315423911ull +
                                             static_cast<std::uint64_t>(epoch)));
            std::shuffle(order.begin(), order.end(), erng);
            int batch_index = 0;
            for (std::size_t b = 0; b < order.size(); b += cfg.batch_size, ++batch_index) {
                const std::size_t end = std::min(order.size(), b + cfg.batch_size);
                const double inv = 1.0 / static_cast<double>(end - b);
                ParamGrads acc = ParamGrads::zeros_like(state);
                double sum_total = 0, sum_p = 0, sum_d = 0, sum_c = 0;
                for (std::size_t j = b; j < end; ++j) {
                    const SegSample& s = merged.samples[order[j]];
                    ParamGrads g = ParamGrads::zeros_like(state);
                    const LossBreakdown lb = sample_loss_and_grads(
                        state, s.image, s.channels, s.height, s.width,
                        proposals.at(s.sample_id), labels[order[j]], t, cfg.lambda, use_dense,
                        use_prop, use_contrastive, &g);
                    acc.accumulate(g, inv);
                    sum_total += lb.total * inv;
                    sum_p += lb.bce_proposal * inv;
                    sum_d += lb.bce_dense.value_or(0.0) * inv;
                    sum_c += lb.contrastive * inv;
                }
                if (sum_total > 1e6)
                    throw std::runtime_error("training diverged at step " + std::to_string(t) +
                                             " epoch " + std::to_string(epoch) +
                                             " (loss " + std::to_string(sum_total) + ")");
                sgd_update(state, acc, opt);
                metrics << t << "," << epoch << "," << batch_index << ","
                        << format_float(sum_total) << "," << format_float(sum_p) << ","
                        << format_float(sum_d) << "," << format_float(sum_c) << "\n";
            }
        }

        const std::string ckpt = out_dir + "/step_" + std::to_string(t) + ".ckpt";
        save_checkpoint(state, ckpt);
        manifest << t << " " << checkpoint_hash(ckpt) << " step_" << std::to_string(t)
                 << ".ckpt\n";

        StepMetrics m = evaluate_state(state, val, proposals, spec, t, dense_only);
        write_summary_rows(summary, m);
        result.steps.push_back(std::move(m));
    }

    if (memory_on) write_buffer_manifest(buffer, out_dir + "/memory.txt");
    return result;
}

}  // namespace

RunResult run_scenario(const RunConfig& config, const std::string& out_dir) {
    return run_impl(config, config.scenario(), config.epochs_per_step, out_dir);
}

RunResult joint_train(const RunConfig& config, const std::string& out_dir) {
    const ScenarioSpec incremental = config.scenario();
    // One step over all classes, with the incremental run's total epoch budget.
    const ScenarioSpec joint = build_scenario_explicit(
        config.num_classes, {config.num_classes}, config.mode,
        config.order_seed ? shuffled_class_order(config.num_classes, *config.order_seed)
                          : std::vector<ClassId>{});
    RunConfig cfg = config;
    cfg.variant = Variant::full;
    return run_impl(cfg, joint, config.epochs_per_step * incremental.num_steps(), out_dir);
}

StepMetrics evaluate_checkpoint(const RunConfig& config, const std::string& checkpoint_path) {
    const ModelState state = load_checkpoint(checkpoint_path);
    const ScenarioSpec spec =
        state.registry.size() == static_cast<std::size_t>(config.num_classes) &&
                state.step == 1
            ? build_scenario_explicit(config.num_classes, {config.num_classes}, config.mode)
            : config.scenario();
    std::vector<SegSample> train, val;
    load_dataset(config, train, val);
    std::map<std::string, ProposalSet> proposals;
    for (const SegSample& s : val) proposals.emplace(s.sample_id, make_proposals(config, s));
    return evaluate_state(state, val, proposals, spec, state.step, config.dense_branch_only());
}

}  // namespace microseg
