#include "divreg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "divreg/error.hpp"
#include "divreg/gradcheck.hpp"
#include "divreg/linalg.hpp"
#include "divreg/rng.hpp"

namespace divreg {

using nlohmann::json;

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& context) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed)
            if (item.key() == key) {
                known = true;
                break;
            }
        if (!known)
            throw SchemaError("unknown key \"" + item.key() + "\" in " + context);
    }
}

double get_number(const json& obj, const char* key, double fallback, const std::string& context) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number())
        throw SchemaError(context + "." + key + " must be a number");
    return obj[key].get<double>();
}

std::size_t get_count(const json& obj, const char* key, std::size_t fallback,
                      const std::string& context) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer() || obj[key].get<long long>() < 0)
        throw SchemaError(context + "." + key + " must be a non-negative integer");
    return obj[key].get<std::size_t>();
}

std::string get_string(const json& obj, const char* key, const std::string& fallback,
                       const std::string& context) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string())
        throw SchemaError(context + "." + key + " must be a string");
    return obj[key].get<std::string>();
}

void require_file(const std::string& path, const std::string& key) {
    if (!std::filesystem::exists(path))
        throw SchemaError(key + ": file not found: " + path);
}

DatasetConfig parse_dataset(const json& obj) {
    check_keys(obj,
               {"source", "n", "noise", "n_per_class", "num_classes", "dim", "spread", "images",
                "labels", "path", "label_column", "label_noise", "split", "data_seed"},
               "dataset");
    DatasetConfig dc;
    if (!obj.contains("source")) throw SchemaError("dataset.source is required");
    dc.source = get_string(obj, "source", "", "dataset");
    if (dc.source != "two_moons" && dc.source != "blobs" && dc.source != "idx" &&
        dc.source != "csv")
        throw SchemaError("dataset.source must be one of two_moons|blobs|idx|csv, got \"" +
                          dc.source + "\"");

    dc.n = get_count(obj, "n", dc.n, "dataset");
    dc.noise = get_number(obj, "noise", dc.noise, "dataset");
    dc.n_per_class = get_count(obj, "n_per_class", dc.n_per_class, "dataset");
    dc.num_classes = static_cast<int>(
        get_count(obj, "num_classes", static_cast<std::size_t>(dc.num_classes), "dataset"));
    dc.blob_dim = get_count(obj, "dim", dc.blob_dim, "dataset");
    dc.spread = get_number(obj, "spread", dc.spread, "dataset");
    dc.images = get_string(obj, "images", "", "dataset");
    dc.labels = get_string(obj, "labels", "", "dataset");
    dc.path = get_string(obj, "path", "", "dataset");
    dc.label_column = get_count(obj, "label_column", 0, "dataset");
    dc.label_noise = get_number(obj, "label_noise", 0.0, "dataset");
    dc.data_seed = get_count(obj, "data_seed", 7, "dataset");

    if (dc.label_noise < 0.0 || dc.label_noise > 1.0)
        throw SchemaError("dataset.label_noise must be in [0, 1]");
    if (obj.contains("split")) {
        const json& sp = obj["split"];
        if (!sp.is_array() || sp.size() != 3)
            throw SchemaError("dataset.split must be an array of 3 fractions");
        for (const auto& v : sp)
            if (!v.is_number()) throw SchemaError("dataset.split entries must be numbers");
        dc.fractions = {sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>()};
    }
    if (dc.source == "idx") {
        if (dc.images.empty() || dc.labels.empty())
            throw SchemaError("dataset.images and dataset.labels are required for source idx");
        require_file(dc.images, "dataset.images");
        require_file(dc.labels, "dataset.labels");
    }
    if (dc.source == "csv") {
        if (dc.path.empty()) throw SchemaError("dataset.path is required for source csv");
        require_file(dc.path, "dataset.path");
    }
    return dc;
}

ModelConfig parse_model(const json& obj) {
    check_keys(obj, {"hidden", "activation"}, "model");
    ModelConfig mc;
    if (obj.contains("hidden")) {
        const json& h = obj["hidden"];
        if (!h.is_array() || h.empty())
            throw SchemaError("model.hidden must be a non-empty array of layer widths");
        mc.hidden.clear();
        for (const auto& v : h) {
            if (!v.is_number_integer() || v.get<long long>() < 1)
                throw SchemaError("model.hidden entries must be integers >= 1");
            mc.hidden.push_back(v.get<std::size_t>());
        }
    }
    if (obj.contains("activation"))
        mc.activation = activation_from_name(get_string(obj, "activation", "relu", "model"));
    return mc;
}

OptimizerConfig parse_optimizer(const json& obj) {
    check_keys(obj, {"lr", "momentum", "weight_decay", "schedule", "epochs", "batch_size"},
               "optimizer");
    OptimizerConfig oc;
    oc.lr = get_number(obj, "lr", oc.lr, "optimizer");
    oc.momentum = get_number(obj, "momentum", oc.momentum, "optimizer");
    oc.weight_decay = get_number(obj, "weight_decay", oc.weight_decay, "optimizer");
    oc.epochs = get_count(obj, "epochs", oc.epochs, "optimizer");
    oc.batch_size = get_count(obj, "batch_size", oc.batch_size, "optimizer");
    if (oc.lr <= 0.0) throw SchemaError("optimizer.lr must be > 0");
    if (oc.momentum < 0.0 || oc.momentum >= 1.0)
        throw SchemaError("optimizer.momentum must be in [0, 1)");
    if (oc.weight_decay < 0.0) throw SchemaError("optimizer.weight_decay must be >= 0");
    if (oc.batch_size < 1) throw SchemaError("optimizer.batch_size must be >= 1");
    if (obj.contains("schedule")) {
        const json& sch = obj["schedule"];
        if (!sch.is_array()) throw SchemaError("optimizer.schedule must be an array");
        for (const auto& entry : sch) {
            if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_integer() ||
                !entry[1].is_number())
                throw SchemaError("optimizer.schedule entries must be [epoch, multiplier] pairs");
            if (entry[1].get<double>() < 0.0)
                throw SchemaError("optimizer.schedule multipliers must be >= 0");
            oc.schedule.push_back(
                {entry[0].get<std::size_t>(), entry[1].get<double>()});
        }
    }
    return oc;
}

RegularizerSpec parse_regularizer(const json& obj) {
    check_keys(obj, {"variant", "lambda1", "lambda2", "gamma", "epsilon", "smooth_kernel"},
               "regularizers[]");
    if (!obj.contains("variant")) throw SchemaError("regularizers[].variant is required");
    RegularizerSpec spec;
    spec.variant = variant_from_name(get_string(obj, "variant", "", "regularizers[]"));
    spec.lambda1 = get_number(obj, "lambda1", 0.001, "regularizers[]");
    spec.lambda2 = get_number(obj, "lambda2", 0.001, "regularizers[]");
    spec.gamma = get_number(obj, "gamma", 10.0, "regularizers[]");
    spec.epsilon = get_number(obj, "epsilon", 1e-6, "regularizers[]");
    if (obj.contains("smooth_kernel")) {
        if (!obj["smooth_kernel"].is_boolean())
            throw SchemaError("regularizers[].smooth_kernel must be a boolean");
        spec.smooth_kernel = obj["smooth_kernel"].get<bool>();
    }
    if (spec.lambda1 < 0.0 || !std::isfinite(spec.lambda1))
        throw SchemaError("lambda1 must be >= 0");
    if (spec.lambda2 < 0.0 || !std::isfinite(spec.lambda2))
        throw SchemaError("lambda2 must be >= 0");
    if (spec.gamma <= 0.0 || !std::isfinite(spec.gamma)) throw SchemaError("gamma must be > 0");
    if (spec.epsilon <= 0.0 || !std::isfinite(spec.epsilon))
        throw SchemaError("epsilon must be > 0");
    if (spec.variant == RegVariant::None) {
        spec.lambda1 = 0.0;
        spec.lambda2 = 0.0;
    }
    return spec;
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const std::exception& e) {
        throw SchemaError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw SchemaError("config root must be a JSON object");
    check_keys(root, {"dataset", "model", "optimizer", "regularizers", "seeds", "output"},
               "config");

    ExperimentConfig cfg;
    if (!root.contains("dataset")) throw SchemaError("missing required key \"dataset\"");
    cfg.dataset = parse_dataset(root["dataset"]);
    if (root.contains("model")) cfg.model = parse_model(root["model"]);
    if (root.contains("optimizer")) cfg.optimizer = parse_optimizer(root["optimizer"]);

    if (root.contains("regularizers")) {
        const json& regs = root["regularizers"];
        if (!regs.is_array() || regs.empty())
            throw SchemaError("regularizers must be a non-empty array");
        cfg.regularizers.clear();
        for (const auto& r : regs) cfg.regularizers.push_back(parse_regularizer(r));
    } else {
        RegularizerSpec none;
        none.variant = RegVariant::None;
        none.lambda1 = 0.0;
        none.lambda2 = 0.0;
        cfg.regularizers.push_back(none);
    }
    if (root.contains("seeds")) {
        const json& seeds = root["seeds"];
        if (!seeds.is_array() || seeds.empty())
            throw SchemaError("seeds must be a non-empty array");
        cfg.seeds.clear();
        for (const auto& s : seeds) {
            if (!s.is_number_integer() || s.get<long long>() < 0)
                throw SchemaError("seeds entries must be non-negative integers");
            cfg.seeds.push_back(s.get<std::uint64_t>());
        }
    }
    cfg.output = get_string(root, "output", cfg.output, "config");

    // fraction sanity mirrors data::split's checks, surfaced at parse time
    double fsum = cfg.dataset.fractions.train + cfg.dataset.fractions.val +
                  cfg.dataset.fractions.test;
    if (cfg.dataset.fractions.train < 0 || cfg.dataset.fractions.val < 0 ||
        cfg.dataset.fractions.test < 0 || std::fabs(fsum - 1.0) > 1e-9)
        throw SchemaError("dataset.split fractions must be >= 0 and sum to 1");
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

PreparedData prepare_dataset(const DatasetConfig& cfg) {
    Dataset base;
    if (cfg.source == "two_moons") {
        base = gen_two_moons(cfg.n, cfg.noise, cfg.data_seed);
    } else if (cfg.source == "blobs") {
        base = gen_blobs(cfg.n_per_class, cfg.num_classes, cfg.blob_dim, cfg.spread, cfg.data_seed);
    } else if (cfg.source == "idx") {
        base = load_idx(cfg.images, cfg.labels);
    } else if (cfg.source == "csv") {
        base = load_csv(cfg.path, cfg.label_column);
    } else {
        throw SchemaError("dataset.source must be one of two_moons|blobs|idx|csv");
    }
    PreparedData data;
    data.parts = split(base, cfg.fractions, mix_seed(cfg.data_seed, 0x5911));
    data.train_eval = data.parts.train;
    if (cfg.label_noise > 0.0)
        data.parts.train =
            inject_label_noise(data.parts.train, cfg.label_noise, mix_seed(cfg.data_seed, 0xf11b));
    return data;
}

RunResult run_single(const PreparedData& data, const ExperimentConfig& cfg,
                     const RegularizerSpec& reg, std::uint64_t seed,
                     std::optional<Mlp>* checkpoint_out) {
    const auto t0 = std::chrono::steady_clock::now();
    if (data.parts.train.size() == 0) throw InvalidArgument("run_single: empty training split");

    std::vector<LayerSpec> specs;
    std::size_t in_dim = data.parts.train.dim();
    for (std::size_t width : cfg.model.hidden) {
        specs.push_back({in_dim, width, cfg.model.activation});
        in_dim = width;
    }
    specs.push_back({in_dim, static_cast<std::size_t>(data.parts.train.num_classes),
                     Activation::Identity});

    // init depends only on the run seed so that variants share trajectories
    Rng init_rng(mix_seed(seed, 0x1217));
    Mlp model(specs, init_rng);

    OptimizerState opt;
    opt.learning_rate = cfg.optimizer.lr;
    opt.momentum = cfg.optimizer.momentum;
    opt.weight_decay = cfg.optimizer.weight_decay;
    opt.schedule = cfg.optimizer.schedule;

    TrainOptions topt;
    topt.batch_size = cfg.optimizer.batch_size;

    RunResult r;
    r.variant = reg.variant;
    r.seed = seed;
    r.lambda1 = reg.lambda1;
    r.lambda2 = reg.lambda2;
    r.gamma = reg.variant == RegVariant::None ? 0.0 : reg.gamma;
    r.epochs = cfg.optimizer.epochs;

    const bool has_val = data.parts.val.size() > 0;
    Mlp best = model;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;

    for (std::size_t epoch = 0; epoch < cfg.optimizer.epochs; ++epoch) {
        EpochMetrics m = train_epoch(model, data.parts.train, reg, opt, seed, epoch, topt);
        double val_err = has_val ? evaluate_error_pct(model, data.parts.val)
                                 : std::numeric_limits<double>::quiet_NaN();
        r.curve.push_back({epoch, m.train_error_pct, val_err, m.mean_aug});
        if (has_val && val_err < best_val) {
            best_val = val_err;
            best = model;
            best_epoch = epoch;
        }
    }

    const bool use_best = has_val && cfg.optimizer.epochs > 0;
    const Mlp& final_model = use_best ? best : model;
    r.best_epoch = use_best ? best_epoch : (cfg.optimizer.epochs ? cfg.optimizer.epochs - 1 : 0);
    r.train_err = evaluate_error_pct(final_model, data.train_eval);
    r.val_err = use_best ? best_val
                         : (has_val ? evaluate_error_pct(final_model, data.parts.val)
                                    : std::numeric_limits<double>::quiet_NaN());
    r.test_err = data.parts.test.size() > 0 ? evaluate_error_pct(final_model, data.parts.test)
                                            : std::numeric_limits<double>::quiet_NaN();
    r.gap = r.train_err - r.test_err;
    r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (checkpoint_out != nullptr) *checkpoint_out = final_model;
    return r;
}

std::string results_csv_header() {
    return "variant,seed,lambda1,lambda2,gamma,train_err,val_err,test_err,gap,epochs,wall_s";
}

std::string to_csv_row(const RunResult& r) {
    std::ostringstream out;
    out << variant_name(r.variant) << ',' << r.seed << ',' << fmt_double(r.lambda1) << ','
        << fmt_double(r.lambda2) << ',' << fmt_double(r.gamma) << ',' << fmt_double(r.train_err)
        << ',' << fmt_double(r.val_err) << ',' << fmt_double(r.test_err) << ','
        << fmt_double(r.gap) << ',' << r.epochs << ',' << fmt_double(r.wall_s);
    return out.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_field_double(const std::string& s, const std::string& path) {
    try {
        return std::stod(s);
    } catch (...) {
        throw ParseError(path + ": bad numeric field \"" + s + "\"");
    }
}

void ensure_parent_dir(const std::string& path) {
    std::filesystem::path p(path);
    if (p.has_parent_path() && !p.parent_path().empty())
        std::filesystem::create_directories(p.parent_path());
}

} // namespace

std::vector<RunResult> parse_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty results file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != results_csv_header())
        throw ParseError(path + ": unexpected header \"" + line + "\"");
    std::vector<RunResult> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 11)
            throw ParseError(path + ": expected 11 fields, got " +
                             std::to_string(fields.size()));
        RunResult r;
        r.variant = variant_from_name(fields[0]);
        r.seed = std::stoull(fields[1]);
        r.lambda1 = parse_field_double(fields[2], path);
        r.lambda2 = parse_field_double(fields[3], path);
        r.gamma = parse_field_double(fields[4], path);
        r.train_err = parse_field_double(fields[5], path);
        r.val_err = parse_field_double(fields[6], path);
        r.test_err = parse_field_double(fields[7], path);
        r.gap = parse_field_double(fields[8], path);
        r.epochs = std::stoull(fields[9]);
        r.wall_s = parse_field_double(fields[10], path);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string resolve_output_path(const std::string& path) {
    const char* dir = std::getenv("DIVREG_OUT_DIR");
    if (dir != nullptr && *dir != '\0' && std::filesystem::path(path).is_relative())
        return (std::filesystem::path(dir) / path).string();
    return path;
}

std::vector<RunResult> run_experiment(const ExperimentConfig& cfg) {
    PreparedData data = prepare_dataset(cfg.dataset);
    const std::string out_path = resolve_output_path(cfg.output);
    ensure_parent_dir(out_path);
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + out_path);
    out << results_csv_header() << '\n';
    out.flush();

    std::vector<RunResult> results;
    for (const RegularizerSpec& reg : cfg.regularizers) {
        for (std::uint64_t seed : cfg.seeds) {
            results.push_back(run_single(data, cfg, reg, seed));
            out << to_csv_row(results.back()) << '\n';
            out.flush(); // partial results survive an abort
        }
    }
    return results;
}

namespace {

std::string task_key(const RunResult& r) {
    return std::string(variant_name(r.variant)) + "," + std::to_string(r.seed) + "," +
           fmt_double(r.lambda1) + "," + fmt_double(r.lambda2) + "," + fmt_double(r.gamma);
}

std::string task_key(const RegularizerSpec& reg, std::uint64_t seed) {
    double gamma = reg.variant == RegVariant::None ? 0.0 : reg.gamma;
    return std::string(variant_name(reg.variant)) + "," + std::to_string(seed) + "," +
           fmt_double(reg.lambda1) + "," + fmt_double(reg.lambda2) + "," + fmt_double(gamma);
}

} // namespace

std::vector<RunResult> sweep(const ExperimentConfig& cfg, const SweepGrid& grid, unsigned jobs) {
    // enumerate tasks in canonical order
    struct Task {
        RegularizerSpec reg;
        std::uint64_t seed;
        std::string key;
    };
    std::vector<Task> tasks;
    for (const RegularizerSpec& base : cfg.regularizers) {
        std::vector<RegularizerSpec> points;
        if (base.variant == RegVariant::None) {
            points.push_back(base);
        } else {
            const auto& l1s = grid.lambda1s.empty() ? std::vector<double>{base.lambda1}
                                                    : grid.lambda1s;
            const auto& l2s = grid.lambda2s.empty() ? std::vector<double>{base.lambda2}
                                                    : grid.lambda2s;
            const auto& gs = grid.gammas.empty() ? std::vector<double>{base.gamma} : grid.gammas;
            for (double l1 : l1s)
                for (double l2 : l2s)
                    for (double g : gs) {
                        RegularizerSpec p = base;
                        p.lambda1 = l1;
                        p.lambda2 = l2;
                        p.gamma = g;
                        points.push_back(p);
                    }
        }
        for (const RegularizerSpec& p : points)
            for (std::uint64_t seed : cfg.seeds) tasks.push_back({p, seed, task_key(p, seed)});
    }
    if (tasks.empty()) throw InvalidArgument("sweep: empty task list");

    const std::string out_path = resolve_output_path(cfg.output);
    ensure_parent_dir(out_path);

    // resume: rows already in the output file are kept, not recomputed
    std::map<std::string, RunResult> done;
    if (std::filesystem::exists(out_path)) {
        for (RunResult& r : parse_results_csv(out_path)) done[task_key(r)] = std::move(r);
    } else {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw IoError("cannot write " + out_path);
        out << results_csv_header() << '\n';
    }

    std::vector<const Task*> pending;
    for (const Task& t : tasks)
        if (!done.count(t.key)) pending.push_back(&t);

    PreparedData data = prepare_dataset(cfg.dataset);
    std::mutex sink_mutex;
    std::ofstream appender(out_path, std::ios::app);
    if (!appender) throw IoError("cannot append to " + out_path);

    auto run_task = [&](const Task& t) {
        RunResult r = run_single(data, cfg, t.reg, t.seed);
        std::lock_guard<std::mutex> lock(sink_mutex);
        appender << to_csv_row(r) << '\n';
        appender.flush();
        done[t.key] = std::move(r);
    };

    if (jobs <= 1 || pending.size() <= 1) {
        for (const Task* t : pending) run_task(*t);
    } else {
        const unsigned workers = std::min<unsigned>(jobs, static_cast<unsigned>(pending.size()));
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr first_error;
        std::mutex error_mutex;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (;;) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= pending.size()) return;
                    try {
                        run_task(*pending[i]);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (!first_error) first_error = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (std::thread& th : pool) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }
    appender.close();

    // canonical rewrite: deterministic row order regardless of completion order
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot rewrite " + out_path);
    out << results_csv_header() << '\n';
    std::vector<RunResult> results;
    for (const Task& t : tasks) {
        auto it = done.find(t.key);
        if (it == done.end()) throw NumericError("sweep: missing result for " + t.key);
        out << to_csv_row(it->second) << '\n';
        results.push_back(it->second);
    }
    return results;
}

void dump_similarity(const Mlp& model, const Dataset& ds, double gamma, const std::string& path) {
    if (ds.size() == 0) throw InvalidArgument("dump_similarity: empty dataset");
    const std::size_t take = std::min<std::size_t>(256, ds.size());
    Matrix chunk(take, ds.dim());
    for (std::size_t i = 0; i < take; ++i) {
        const double* from = ds.features.row(i);
        std::copy(from, from + ds.dim(), chunk.row(i));
    }
    ForwardTrace trace = forward(model, chunk);
    ActivationBatch acts = trace.feature_activations(model);
    SimilarityMatrix sim = pairwise_similarity(acts, gamma);
    double det = det_psd(sim.s, 0.0, /*tolerant_singular=*/true);
    double logdet = logdet_psd(sim.s, 1e-6);

    const std::string out_path = resolve_output_path(path);
    ensure_parent_dir(out_path);
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + out_path);
    out << "# det=" << fmt_double(det) << " logdet=" << fmt_double(logdet) << "\n";
    for (std::size_t n = 0; n < sim.units(); ++n) {
        for (std::size_t q = 0; q < sim.units(); ++q) {
            if (q > 0) out << ',';
            out << fmt_double(sim.s(n, q));
        }
        out << '\n';
    }
    if (!out) throw IoError("short write to " + out_path);
}

double time_regularizer_loss(RegVariant variant, std::size_t c, std::size_t m, int reps) {
    RegularizerSpec spec;
    spec.variant = variant;
    spec.lambda1 = 0.001;
    spec.lambda2 = 0.001;
    spec.gamma = 1.0;
    Rng rng(mix_seed(c * 1315423911ULL + m, 0x7157));
    Matrix values(m, c);
    for (double& v : values.data()) v = rng.normal();
    ActivationBatch acts(values);

    // min over repetitions: scheduler noise only ever adds time
    double best = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < reps + 1; ++rep) {
        auto t0 = std::chrono::steady_clock::now();
        RegularizerOutput out = regularizer_loss(acts, spec);
        auto t1 = std::chrono::steady_clock::now();
        if (!std::isfinite(out.loss)) throw NumericError("time_regularizer_loss: bad loss");
        if (rep == 0) continue; // warmup
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

} // namespace divreg
