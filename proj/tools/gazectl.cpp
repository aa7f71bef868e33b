#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gazectl/baselines.hpp"
#include "gazectl/checkpoint.hpp"
#include "gazectl/controller.hpp"
#include "gazectl/eval.hpp"
#include "gazectl/io.hpp"
#include "gazectl/server.hpp"
#include "gazectl/train.hpp"

namespace fs = std::filesystem;
using namespace gazectl;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

int exit_code(ErrorCode c) {
    switch (c) {
        case ErrorCode::InvalidConfig:
        case ErrorCode::BadN:
            return kUsage;
        case ErrorCode::NotScalarLoss:
        case ErrorCode::MissingGradient:
        case ErrorCode::NonFiniteLoss:
        case ErrorCode::SourceEnded:
        case ErrorCode::PortBusy:
            return kRuntime;
        default:
            return kData;
    }
}

const CLI::IsMember kVariants({"2d", "3d"});
const CLI::IsMember kForms({"product", "sum"});

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void ensure_parent(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text) {
    ensure_parent(path);
    auto out = open_out(path);
    out << text;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Shared option groups

struct TrainOpts {
    std::string arch = "lstm";
    int units = 64;
    int layers = 2;
    int blocks = 2;
    int heads = 2;
    int head_size = 0;
    int ffn_hidden = 1024;
    TrainConfig train;

    void add(CLI::App* app, bool with_ga = false) {
        if (with_ga)
            app->add_option("--arch", arch, "lstm, transformer, ga-product or ga-sum")
                ->capture_default_str()
                ->check(CLI::IsMember({"lstm", "transformer", "ga-product", "ga-sum"}));
        else
            app->add_option("--arch", arch, "lstm or transformer")->capture_default_str()->check(CLI::IsMember({"lstm", "transformer"}));
        app->add_option("--units", units, "LSTM units per layer")->capture_default_str();
        app->add_option("--layers", layers, "LSTM layers")->capture_default_str();
        app->add_option("--blocks", blocks, "transformer encoder blocks")->capture_default_str();
        app->add_option("--heads", heads, "attention heads per block")->capture_default_str();
        app->add_option("--head-size", head_size, "key/query size per head (0 = feature width)")->capture_default_str();
        app->add_option("--ffn-hidden", ffn_hidden, "transformer feed-forward width")->capture_default_str();
        app->add_option("--lr", train.lr, "Adam learning rate")->capture_default_str();
        app->add_option("--batch-size", train.batch_size, "minibatch size")->capture_default_str();
        app->add_option("--patience", train.patience, "epochs without improvement before stopping")->capture_default_str();
        app->add_option("--max-epochs", train.max_epochs, "epoch cap")->capture_default_str();
        app->add_option("--holdout", train.holdout, "fraction of training situations used for early stopping")->capture_default_str();
    }

    ModelConfig model_config(const Dataset& d) const {
        const int L = feature_width(d.meta().variant), C = label_count(d.meta().variant);
        if (parse_architecture(arch) == Architecture::Lstm) return LstmConfig{d.m(), L, C, units, layers};
        TransformerConfig t;
        t.m = d.m();
        t.L = L;
        t.C = C;
        t.blocks = blocks;
        t.heads = heads;
        t.head_size = head_size;
        t.ffn_hidden = ffn_hidden;
        return t;
    }
};

struct PredictorOpts {
    std::string checkpoint;
    std::string baseline;
    std::string oracle;
    std::string variant;

    void add(CLI::App* app) {
        auto* g = app->add_option_group("predictor", "exactly one predictor source");
        g->add_option("--checkpoint", checkpoint, "trained model checkpoint");
        g->add_option("--baseline", baseline, "heuristic weights JSON (from fit-baseline)");
        g->add_option("--oracle", oracle, "gazer persona JSON");
        g->require_option(1);
        app->add_option("--variant", variant, "2d or 3d (inferred from a checkpoint)")->check(kVariants);
    }

    struct Built {
        std::unique_ptr<Predictor> predictor;
        Variant variant = Variant::TwoD;
        Normalization normalization;
    };

    Built build() const {
        Built b;
        if (!checkpoint.empty()) {
            const auto bytes = read_file_bytes(checkpoint);
            const auto header = checkpoint_header(bytes);
            const auto& extra = header.value("extra", json::object());
            auto model = decode_checkpoint(bytes);
            b.variant = extra.contains("variant") ? parse_variant(extra.at("variant").get<std::string>())
                        : model.L() == feature_width(Variant::TwoD) ? Variant::TwoD
                                                                    : Variant::ThreeD;
            if (!variant.empty() && parse_variant(variant) != b.variant)
                throw Error(ErrorCode::VariantMismatch, "checkpoint is " + to_string(b.variant) + ", --variant " + variant);
            if (extra.contains("normalization")) b.normalization = normalization_from_json(extra.at("normalization"));
            b.predictor = std::make_unique<ModelPredictor>(std::move(model), b.variant);
            return b;
        }
        if (variant.empty()) throw Error(ErrorCode::InvalidConfig, "--variant is required with --baseline or --oracle");
        b.variant = parse_variant(variant);
        if (!baseline.empty()) {
            auto j = load_json(baseline);
            b.predictor = std::make_unique<BaselinePredictor>(heuristic_from_json(j.contains("weights") ? j.at("weights") : j), b.variant);
        } else {
            const auto personas = load_personas(oracle);
            b.predictor = std::make_unique<OraclePredictor>(personas.front(), b.variant);
        }
        return b;
    }
};

struct PolicyOpts {
    std::string file;
    std::optional<int> m;
    std::optional<double> min_dwell;
    std::optional<double> margin;
    std::optional<double> max_rate;

    void add(CLI::App* app) {
        app->add_option("--policy", file, "controller policy JSON");
        app->add_option("--m", m, "window length (ignored with a checkpoint)");
        app->add_option("--min-dwell", min_dwell, "seconds before a target may be left without the margin");
        app->add_option("--switch-margin", margin, "probability lead that overrides the dwell");
        app->add_option("--max-pan-rate", max_rate, "pan speed limit, degrees per second");
    }

    ControllerPolicy build() const {
        ControllerPolicy p;
        if (!file.empty()) p = policy_from_json(load_json(file));
        if (m) p.m = *m;
        if (min_dwell) p.min_dwell_s = *min_dwell;
        if (margin) p.switch_margin = *margin;
        if (max_rate) p.max_pan_rate_dps = *max_rate;
        p.validate();
        return p;
    }
};

void write_reports(const std::string& dir, std::span<const KFoldOutput> outputs) {
    fs::create_directories(dir);
    const auto rep = build_report(outputs);
    write_text((fs::path(dir) / "report.csv").string(), rep.to_csv());
    save_json((fs::path(dir) / "report.json").string(), rep.to_json());
    save_json((fs::path(dir) / "plot.json").string(), rep.plot_data());
}

void print_fold(const FoldAccuracy& f) {
    std::cerr << "fold " << f.fold << ": train " << fmt(f.train[0]) << '/' << fmt(f.train[1]) << '/' << fmt(f.train[2]) << "  test "
              << fmt(f.test[0]) << '/' << fmt(f.test[1]) << '/' << fmt(f.test[2]) << '\n';
}

// ---------------------------------------------------------------------------
// Subcommands

struct ScenariosCmd {
    std::string variant = "2d";
    bool count_only = false;
    std::string specs_out;
    std::string timeline_out;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("scenarios", "List the enumerated situations and compile their timeline");
        c->add_option("--variant", variant, "2d or 3d")->capture_default_str()->check(kVariants);
        c->add_flag("--count-only", count_only, "print only the number of situations");
        c->add_option("--specs-out", specs_out, "write the situation list as JSON");
        c->add_option("--timeline-out", timeline_out, "write the compiled timeline (JSON lines)");
        c->callback([this] { run(); });
    }

    void run() const {
        const Variant v = parse_variant(variant);
        auto specs = v == Variant::TwoD ? schedule_2d(enumerate_situations_2d()) : enumerate_situations_3d();
        if (count_only) {
            std::cout << specs.size() << '\n';
            return;
        }
        json list = json::array();
        for (const auto& s : specs) list.push_back(to_json(s));
        if (!specs_out.empty()) {
            ensure_parent(specs_out);
            save_json(specs_out, list);
        }
        const auto tl = compile_timeline(specs, default_fps(v));
        if (!timeline_out.empty()) {
            ensure_parent(timeline_out);
            save_timeline(timeline_out, tl);
        }
        std::cout << json{{"variant", to_string(v)},
                          {"situations", specs.size()},
                          {"fps", tl.fps},
                          {"frames", tl.frames.size()},
                          {"duration_s", static_cast<double>(tl.frames.size()) / tl.fps}}
                         .dump()
                  << '\n';
    }
};

struct SynthCmd {
    std::string variant = "2d";
    std::string timeline;
    std::string persona_file;
    std::string form;
    std::string out;
    int m = 24;
    int personas = 15;
    double jitter = 0.1;
    int latency_spread = 2;
    std::optional<double> temperature;
    std::optional<double> noise;
    std::optional<int> latency;
    std::uint64_t seed = 0;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("synth", "Generate an oracle-labelled training corpus");
        c->add_option("--variant", variant, "2d or 3d (ignored with --timeline)")->capture_default_str()->check(kVariants);
        c->add_option("--timeline", timeline, "timeline file (default: the canonical timeline)");
        c->add_option("--persona", persona_file, "base persona JSON, or a {\"personas\": [...]} list used as is");
        c->add_option("--form", form, "attention form of the base persona: product or sum")->check(kForms);
        c->add_option("--m", m, "window length")->capture_default_str();
        c->add_option("--personas", personas, "number of jittered personas")->capture_default_str();
        c->add_option("--jitter", jitter, "log-normal jitter of persona weights")->capture_default_str();
        c->add_option("--latency-spread", latency_spread, "extra reaction latency range, ticks")->capture_default_str();
        c->add_option("--temperature", temperature, "base persona softmax temperature");
        c->add_option("--noise", noise, "base persona glance noise rate");
        c->add_option("--latency", latency, "base persona reaction latency, ticks");
        c->add_option("--out", out, "output dataset")->required();
        c->add_option("--seed", seed, "random seed")->required();
        c->callback([this] { run(); });
    }

    void run() const {
        const Timeline tl = timeline.empty() ? canonical_timeline(parse_variant(variant)) : load_timeline(timeline);
        std::vector<GazerPersona> people;
        GazerPersona base;
        if (!persona_file.empty()) {
            auto loaded = load_personas(persona_file);
            if (loaded.size() > 1) people = std::move(loaded);
            else base = loaded.front();
        }
        if (people.empty()) {
            if (!form.empty()) base.form = parse_form(form);
            if (temperature) base.temperature = *temperature;
            if (noise) base.noise_rate = *noise;
            if (latency) base.latency_ticks = *latency;
            base.validate();
            if (personas < 1) throw Error(ErrorCode::InvalidConfig, "--personas must be >= 1");
            people = jittered_personas(base, personas, seed, jitter, latency_spread);
        }
        auto d = synth_corpus(tl, people, m);
        d.meta().seed = seed;
        ensure_parent(out);
        save_dataset(out, d);
        std::cout << json{{"path", out}, {"examples", d.size()}, {"situations", d.situation_ids().size()}, {"personas", people.size()}}.dump()
                  << '\n';
    }
};

struct TrainCmd {
    std::string data;
    std::string eval_data;
    std::string out;
    std::string history;
    TrainOpts opts;
    std::uint64_t seed = 0;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("train", "Fit one sequence model");
        c->add_option("--data", data, "training dataset")->required();
        c->add_option("--eval-data", eval_data, "early-stopping dataset (default: a --holdout split of --data)");
        c->add_option("--out", out, "checkpoint path")->required();
        c->add_option("--history", history, "per-epoch CSV");
        opts.train.holdout = 0.1;
        opts.add(c);
        c->add_option("--seed", seed, "random seed")->required();
        c->callback([this] { run(); });
    }

    void run() {
        const auto d = load_dataset(data);
        auto cfg = opts.train;
        cfg.seed = seed;
        cfg.validate();
        Dataset train_set, eval_set;
        if (!eval_data.empty()) {
            train_set = d;
            eval_set = load_dataset(eval_data);
        } else {
            if (!(cfg.holdout > 0)) throw Error(ErrorCode::InvalidConfig, "give --eval-data or a --holdout > 0");
            auto split = holdout_split(d, cfg.holdout, seed);
            train_set = std::move(split.train);
            eval_set = std::move(split.test);
        }
        auto model = SequenceModel<float>::build(opts.model_config(d), seed);
        std::cerr << to_string(model.architecture()) << " m=" << model.m() << ", " << model.parameter_count() << " parameters, "
                  << train_set.size() << " train / " << eval_set.size() << " eval examples\n";
        const auto hist = fit(model, train_set, eval_set, cfg, [](const EpochRecord& e) {
            std::cerr << "epoch " << e.epoch << "  loss " << fmt(e.train_loss) << "  train " << fmt(e.train_acc) << "  eval "
                      << fmt(e.eval_acc) << '\n';
        });
        ensure_parent(out);
        save_checkpoint(out, model,
                        {{"variant", to_string(d.meta().variant)},
                         {"normalization", normalization_to_json(d.meta().normalization)},
                         {"train", to_json(cfg)},
                         {"data", data}});
        if (!history.empty()) write_text(history, hist.to_csv());
        const auto acc = topn_all(model, eval_set);
        std::cout << json{{"checkpoint", out}, {"history", hist.to_json()}, {"eval_topn", acc}}.dump()
                  << '\n';
    }
};

struct KFoldCmd {
    std::string data;
    std::string out_dir = "results";
    int k = 10;
    std::vector<int> folds;
    TrainOpts opts;
    GaConfig ga;
    std::uint64_t seed = 0;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("kfold", "Cross-validate a model family over situation folds");
        c->add_option("--data", data, "dataset")->required();
        c->add_option("--out-dir", out_dir, "directory for fold results and reports")->capture_default_str();
        c->add_option("--k", k, "number of folds")->capture_default_str();
        c->add_option("--folds", folds, "run only these folds");
        opts.add(c, true);
        c->add_option("--population", ga.population, "GA population")->capture_default_str();
        c->add_option("--generations", ga.generations, "GA generations")->capture_default_str();
        c->add_option("--seed", seed, "random seed")->required();
        c->callback([this] { run(); });
    }

    void run() {
        const auto d = load_dataset(data);
        const auto plan = plan_folds(d, k, seed);
        KFoldOutput output;
        std::vector<TrainHistory> histories;
        if (opts.arch == "ga-product" || opts.arch == "ga-sum") {
            output = run_ga(d, plan);
        } else {
            auto cfg = opts.train;
            cfg.seed = seed;
            cfg.validate();
            const auto mc = opts.model_config(d);
            KFoldOptions ko;
            ko.only_folds = folds;
            ko.on_fold = [](const FoldAccuracy& f, const TrainHistory&) { print_fold(f); };
            auto run = run_kfold(
                d, plan, [&](std::uint64_t s) { return SequenceModel<float>::build(mc, s); }, cfg, opts.arch, ko);
            output = std::move(run.output);
            histories = std::move(run.histories);
        }
        const auto stem = output.arch + "-" + to_string(output.variant) + "-m" + std::to_string(output.m);
        fs::create_directories(out_dir);
        save_json((fs::path(out_dir) / (stem + ".json")).string(), to_json(output));
        for (std::size_t i = 0; i < histories.size(); ++i)
            write_text((fs::path(out_dir) / (stem + "-fold" + std::to_string(output.folds[i].fold) + ".csv")).string(),
                       histories[i].to_csv());
        const std::vector<KFoldOutput> one{output};
        write_reports(out_dir, one);
        std::cout << build_report(one).to_csv();
    }

    KFoldOutput run_ga(const Dataset& d, const FoldPlan& plan) {
        const auto form = parse_form(opts.arch.substr(3));
        KFoldOutput out;
        out.arch = opts.arch;
        out.variant = d.meta().variant;
        out.m = d.m();
        for (int f = 0; f < plan.k; ++f) {
            if (!folds.empty() && std::find(folds.begin(), folds.end(), f) == folds.end()) continue;
            const auto split = split_fold(d, plan, f);
            auto cfg = ga;
            cfg.seed = seed + static_cast<std::uint64_t>(f);
            const auto res = fit_ga(split.train, form, cfg);
            FoldAccuracy acc;
            acc.fold = f;
            acc.train = baseline_topn(split.train, res.best);
            acc.test = baseline_topn(split.test, res.best);
            acc.train_examples = split.train.size();
            acc.test_examples = split.test.size();
            print_fold(acc);
            out.folds.push_back(acc);
        }
        return out;
    }
};

struct FitBaselineCmd {
    std::string data;
    std::string out;
    std::string form = "product";
    GaConfig ga;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("fit-baseline", "Fit heuristic attention weights with the genetic algorithm");
        c->add_option("--data", data, "dataset")->required();
        c->add_option("--out", out, "weights JSON")->required();
        c->add_option("--form", form, "product or sum")->capture_default_str()->check(kForms);
        c->add_option("--population", ga.population, "population size")->capture_default_str();
        c->add_option("--generations", ga.generations, "generations")->capture_default_str();
        c->add_option("--mutation-sigma", ga.mutation_sigma, "log-space mutation scale")->capture_default_str();
        c->add_option("--mutation-rate", ga.mutation_rate, "per-gene mutation probability")->capture_default_str();
        c->add_option("--elites", ga.elites, "elites carried over per generation")->capture_default_str();
        c->add_option("--tournament", ga.tournament, "tournament size")->capture_default_str();
        c->add_option("--holdout", ga.holdout, "fraction of situations held out")->capture_default_str();
        c->add_option("--seed", ga.seed, "random seed")->required();
        c->callback([this] { run(); });
    }

    void run() const {
        const auto d = load_dataset(data);
        const auto res = fit_ga(d, parse_form(form), ga);
        ensure_parent(out);
        save_json(out, to_json(res));
        std::cout << json{{"weights", out}, {"train_accuracy", res.train_accuracy}, {"heldout_accuracy", res.heldout_accuracy}}.dump()
                  << '\n';
    }
};

struct EvalCmd {
    std::vector<std::string> inputs;
    std::string out_dir;
    std::string checkpoint;
    std::string baseline;
    std::string data;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("eval", "Build accuracy reports, or score a checkpoint or baseline on a dataset");
        c->add_option("inputs", inputs, "fold result JSON files from kfold");
        c->add_option("--out-dir", out_dir, "write report.csv, report.json and plot.json here");
        c->add_option("--checkpoint", checkpoint, "model to score on --data");
        c->add_option("--baseline", baseline, "heuristic weights to score on --data");
        c->add_option("--data", data, "dataset to score");
        c->callback([this] { run(); });
    }

    void run() const {
        if (!checkpoint.empty() || !baseline.empty()) {
            if (data.empty()) throw Error(ErrorCode::InvalidConfig, "--data is required when scoring");
            score();
            return;
        }
        if (inputs.empty()) throw Error(ErrorCode::InvalidConfig, "give fold result files or --checkpoint/--baseline with --data");
        std::vector<KFoldOutput> outs;
        for (const auto& p : inputs) outs.push_back(kfold_from_json(load_json(p)));
        if (!out_dir.empty()) write_reports(out_dir, outs);
        std::cout << build_report(outs).to_csv();
    }

    void score() const {
        const auto d = load_dataset(data);
        json out = {{"data", data}, {"examples", d.size()}};
        if (!checkpoint.empty()) {
            auto model = load_checkpoint(checkpoint);
            require_compatible(d, model.m(), model.L(), model.C(), "evaluation");
            const auto probs = predict_dataset(model, d);
            out["model"] = to_string(model.architecture()) + " m=" + std::to_string(model.m());
            out["topn"] = topn_all(model, d);
            out["confusion"] = confusion(argmax_rows(probs, static_cast<std::size_t>(model.C())), labels_of(d), model.C());
        }
        if (!baseline.empty()) {
            auto j = load_json(baseline);
            out["baseline_topn"] = baseline_topn(d, heuristic_from_json(j.contains("weights") ? j.at("weights") : j));
        }
        std::cout << out.dump(2) << '\n';
    }
};

struct RunCmd {
    std::string timeline;
    std::string log;
    bool realtime = false;
    PredictorOpts pred;
    PolicyOpts policy;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("run", "Drive the gaze controller over a timeline");
        c->add_option("--timeline", timeline, "timeline file (default: canonical timeline of the variant)");
        c->add_option("--log", log, "command log (JSON lines)");
        c->add_flag("--realtime", realtime, "pace ticks to the wall clock");
        pred.add(c);
        policy.add(c);
        c->callback([this] { run(); });
    }

    void run() {
        auto b = pred.build();
        const Timeline tl = timeline.empty() ? canonical_timeline(b.variant) : load_timeline(timeline);
        auto pol = policy.build();
        if (const int w = b.predictor->window_length()) pol.m = w;
        Controller ctl(b.variant, pol, std::move(b.predictor), b.normalization);
        TimelineSource src(tl);
        StreamOptions so;
        so.realtime = realtime;
        const auto res = run_stream(ctl, src, so);
        if (!log.empty()) {
            ensure_parent(log);
            auto out = open_out(log);
            write_command_log(out, res.commands);
        }
        std::size_t switches = 0;
        for (std::size_t i = 1; i < res.commands.size(); ++i) switches += res.commands[i].target != res.commands[i - 1].target ? 1 : 0;
        std::cout << json{{"predictor", ctl.predictor().describe()},
                          {"ticks", res.commands.size()},
                          {"target_changes", switches},
                          {"latency", to_json(res.latency)}}
                         .dump()
                  << '\n';
    }
};

struct ServeCmd {
    ServeConfig cfg;
    PredictorOpts pred;
    PolicyOpts policy;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("serve", "Run the session service");
        c->add_option("--host", cfg.host, "bind address")->capture_default_str();
        c->add_option("--port", cfg.port, "TCP port (0 picks one)")->capture_default_str();
        c->add_option("--time-scale", cfg.time_scale, "session clock speed-up")->capture_default_str();
        c->add_option("--record-dir", cfg.record_dir, "directory for recordings with relative paths")->capture_default_str();
        pred.add(c);
        policy.add(c);
        c->callback([this] { run(); });
    }

    void run() {
        auto b = pred.build();
        cfg.policy = policy.build();
        cfg.normalization = b.normalization;
        Server server(cfg, std::move(b.predictor));
        const int port = server.start();
        std::cerr << "listening on " << cfg.host << ':' << port << " (" << to_string(b.variant) << ")\n";
        server.wait(g_interrupted);
        server.stop();
    }
};

struct ValidateCmd {
    std::vector<std::string> files;

    void add(CLI::App& app) {
        auto* c = app.add_subcommand("validate", "Check dataset, timeline and checkpoint files");
        c->add_option("files", files, "files to check")->required()->check(CLI::ExistingFile);
        c->callback([this] { run(); });
    }

    static std::string kind_of(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        char magic[4] = {};
        in.read(magic, 4);
        if (in.gcount() == 4 && std::equal(magic, magic + 4, kCheckpointMagic)) return "checkpoint";
        std::string first;
        std::ifstream text(path);
        std::getline(text, first);
        try {
            const auto h = json::parse(first);
            if (h.value("format", "") == "gazectl-timeline") return "timeline";
        } catch (const json::exception&) {
        }
        return "dataset";
    }

    void run() const {
        for (const auto& f : files) {
            const auto kind = kind_of(f);
            json info = {{"path", f}, {"kind", kind}};
            try {
                if (kind == "checkpoint") {
                    auto model = load_checkpoint(f);
                    info["arch"] = to_string(model.architecture());
                    info["m"] = model.m();
                    info["parameters"] = model.parameter_count();
                } else if (kind == "timeline") {
                    const auto tl = load_timeline(f);
                    info["variant"] = to_string(tl.variant);
                    info["frames"] = tl.frames.size();
                } else {
                    const auto d = load_dataset(f);
                    info["variant"] = to_string(d.meta().variant);
                    info["m"] = d.m();
                    info["examples"] = d.size();
                    info["situations"] = d.situation_ids().size();
                }
            } catch (const Error& e) {
                throw Error(e.code(), f + ": " + e.message());
            }
            std::cout << info.dump() << '\n';
        }
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaze-control engine: scenario synthesis, training, evaluation and live control"};
    app.set_config("--config", "", "key-value defaults file (TOML or INI; one section per subcommand)");
    app.require_subcommand(1);
    app.set_version_flag("--version", "gazectl 0.1.0");

    ScenariosCmd scenarios;
    SynthCmd synth;
    TrainCmd train;
    KFoldCmd kfold;
    FitBaselineCmd fit_baseline;
    EvalCmd eval;
    RunCmd run;
    ServeCmd serve;
    ValidateCmd validate;
    scenarios.add(app);
    synth.add(app);
    train.add(app);
    kfold.add(app);
    fit_baseline.add(app);
    eval.add(app);
    run.add(app);
    serve.add(app);
    validate.add(app);

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}
