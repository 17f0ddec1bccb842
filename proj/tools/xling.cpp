// xling: train, evaluate, and analyze cross-lingual dependency parsing
// experiments built around word-order distillation.
//
// Subcommands: train-parser, train-teacher, train-student, evaluate,
// typology, synth, analyze. Settings come from defaults, then an optional
// "key = value" config file, then flags (later layers win). Exit codes:
// 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "xling/config.hpp"
#include "xling/distill.hpp"
#include "xling/parser.hpp"
#include "xling/report.hpp"
#include "xling/teacher.hpp"
#include "xling/typology.hpp"

namespace fs = std::filesystem;
using namespace xling;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_input(const std::string& path, const std::string& what) {
    if (path.empty()) throw UsageError(what + " is required");
    if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
}

fs::path make_out_dir(const ExperimentConfig& cfg) {
    if (cfg.out.empty()) throw UsageError("out is required (output directory)");
    fs::create_directories(cfg.out);
    return fs::path(cfg.out);
}

// Collects --config plus per-key flags for one subcommand. Flags funnel
// through ExperimentConfig::set, so files and flags share one namespace and
// later assignments win.
struct ConfigCli {
    ExperimentConfig cfg;
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> flag_values;

    void attach(CLI::App* app, const std::vector<std::string>& keys) {
        app->add_option("--config", config_path, "key = value settings file");
        for (const std::string& key : keys)
            app->add_option_function<std::string>(
                "--" + key,
                [this, key](const std::string& v) { flag_values.emplace_back(key, v); },
                "sets '" + key + "'");
    }

    ExperimentConfig resolve() {
        if (!config_path.empty()) {
            require_input(config_path, "config file");
            load_config_file(config_path, cfg);
        }
        for (const auto& [k, v] : flag_values) cfg.set(k, v);
        return cfg;
    }
};

const std::vector<std::string> kTrainKeys{"epochs", "batch",   "lr",    "weight_decay",
                                          "beta1",  "beta2",   "seeds", "min_freq",
                                          "source", "target",  "out"};
const std::vector<std::string> kParserDimKeys{"word_dim", "pos_dim", "lstm_layers", "hidden",
                                              "mlp_dim"};

std::vector<std::string> operator+(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

Treebank load_treebank(const std::string& path) { return parse_conllu_file(path); }

// teacher references: a checkpoint path, "heur:<typology csv>", or
// "rand:<seed>"
std::unique_ptr<OrderPredictor> make_teacher(const std::string& ref) {
    if (ref.rfind("heur:", 0) == 0) {
        const std::string path = ref.substr(5);
        require_input(path, "heuristic teacher table");
        TypologyVector tv = parse_typology_csv_file(path);
        std::map<TripleKey, double> table;
        for (std::size_t i = 0; i < tv.size(); ++i) table[tv.keys[i]] = tv.left_freq[i];
        return std::make_unique<HeurTeacher>(std::move(table));
    }
    if (ref.rfind("rand:", 0) == 0) {
        const std::string digits = ref.substr(5);
        try {
            std::size_t used = 0;
            const std::uint64_t seed = std::stoull(digits, &used);
            if (used != digits.size()) throw std::invalid_argument("trailing");
            return std::make_unique<RandTeacher>(seed);
        } catch (const std::exception&) {
            throw UsageError("rand teacher needs an integer seed, got '" + digits + "'");
        }
    }
    require_input(ref, "teacher checkpoint");
    return std::make_unique<TeacherModel>(TeacherModel::load(ref));
}

int run_train_parser(ExperimentConfig cfg) {
    require_input(cfg.source, "source treebank");
    if (!cfg.target.empty()) require_input(cfg.target, "target treebank");
    const Treebank train_tb = load_treebank(cfg.source);
    const Treebank eval_tb = cfg.target.empty() ? train_tb : load_treebank(cfg.target);
    const fs::path out = make_out_dir(cfg);

    const auto t0 = std::chrono::steady_clock::now();
    RunReport report;
    report.command = "train-parser";
    report.config = cfg.snapshot();
    for (std::uint64_t seed : cfg.seeds) {
        auto [model, curve] =
            train_parser(train_tb, cfg.parser_dims(), cfg.train_options(), seed, cfg.min_freq);
        model.save((out / ("parser-seed" + std::to_string(seed) + ".bin")).string());
        const EvalResult ev = evaluate(model, eval_tb);
        report.entries.push_back(
            {seed, {{"loss", curve.back()}, {"uas", ev.uas}, {"las", ev.las}}});
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.write_jsonl_file((out / "train-parser.report.jsonl").string());
    std::cout << report.table();
    return 0;
}

int run_train_teacher(ExperimentConfig cfg) {
    require_input(cfg.source, "source treebank");
    if (!cfg.model.empty()) require_input(cfg.model, "head-finding parser checkpoint");
    Treebank tb = load_treebank(cfg.source);
    const fs::path out = make_out_dir(cfg);

    const auto t0 = std::chrono::steady_clock::now();
    double head_agreement = -1.0;
    if (!cfg.model.empty()) {  // re-head the data with a source-language parser
        ParserModel parser = ParserModel::load(cfg.model);
        FindHeadsResult fh = find_heads(parser, tb);
        head_agreement = fh.head_agreement;
        tb = std::move(fh.treebank);
    }

    RunReport report;
    report.command = "train-teacher";
    report.config = cfg.snapshot();
    for (std::uint64_t seed : cfg.seeds) {
        TeacherTrainOutcome outcome =
            train_teacher(tb, cfg.teacher_dims(), cfg.train_options(), seed, cfg.holdout);
        outcome.model.save((out / ("teacher-seed" + std::to_string(seed) + ".bin")).string());
        SeedMetrics m{seed,
                      {{"loss", outcome.curve.back()},
                       {"holdout_acc", outcome.holdout_accuracy},
                       {"holdout_edges", static_cast<double>(outcome.holdout_edges)}}};
        if (head_agreement >= 0.0) m.values["head_agreement"] = head_agreement;
        report.entries.push_back(std::move(m));
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.write_jsonl_file((out / "train-teacher.report.jsonl").string());
    std::cout << report.table();
    return 0;
}

int run_train_student(ExperimentConfig cfg) {
    require_input(cfg.source, "source treebank");
    if (!cfg.target.empty()) require_input(cfg.target, "target treebank");
    const DistillMode mode = distill_mode_from(cfg.mode);
    std::unique_ptr<OrderPredictor> teacher;
    if (mode == DistillMode::wol) {
        if (!cfg.teacher.empty())
            throw UsageError("mode wol uses the source text's own order; drop the teacher");
    } else {
        if (cfg.teacher.empty())
            throw UsageError("mode " + cfg.mode +
                             " needs a teacher (checkpoint path, heur:<csv>, or rand:<seed>)");
        teacher = make_teacher(cfg.teacher);
    }
    const Treebank train_tb = load_treebank(cfg.source);
    const Treebank eval_tb = cfg.target.empty() ? train_tb : load_treebank(cfg.target);
    const fs::path out = make_out_dir(cfg);

    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<TripleKey> keys = select_triples(eval_tb, cfg.triples);
    const TypologyVector eval_feature = order_feature(eval_tb, keys);

    RunReport report;
    report.command = "train-student";
    report.config = cfg.snapshot();
    for (std::uint64_t seed : cfg.seeds) {
        auto [student, curve] = train_student(train_tb, cfg.student_dims(), cfg.train_options(),
                                              cfg.lambda2, mode, teacher.get(), seed,
                                              cfg.min_freq);
        student.save((out / ("student-seed" + std::to_string(seed) + ".bin")).string());
        const EvalResult ev = evaluate(student.parser(), eval_tb);
        // Probe the student's order beliefs on the text it trained on; on the
        // evaluation text a position-aware encoder can read the answer off the
        // input, which would hide what the order branch actually internalized.
        const TypologyVector predicted = predicted_order_frequency(student, train_tb, keys);
        report.entries.push_back({seed,
                                  {{"loss", curve.back()},
                                   {"uas", ev.uas},
                                   {"las", ev.las},
                                   {"order_acc", order_accuracy(student, eval_tb)},
                                   {"typ_dist", word_order_distance(predicted, eval_feature,
                                                                    cfg.normalized)}}});
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.write_jsonl_file((out / "train-student.report.jsonl").string());
    std::cout << report.table();
    return 0;
}

int run_evaluate(ExperimentConfig cfg) {
    require_input(cfg.model, "model checkpoint");
    require_input(cfg.source, "treebank");
    const Treebank tb = load_treebank(cfg.source);

    const std::string kind =
        nlohmann::json::parse(load_tensors(cfg.model).meta).value("kind", "");
    nlohmann::json result;
    result["model"] = cfg.model;
    result["treebank"] = cfg.source;
    result["kind"] = kind;

    std::unique_ptr<OrderPredictor> order_model;
    if (kind == "parser") {
        ParserModel m = ParserModel::load(cfg.model);
        const EvalResult ev = evaluate(m, tb);
        result["n_tokens"] = ev.n_tokens;
        result["uas"] = ev.uas;
        result["las"] = ev.las;
    } else if (kind == "student") {
        auto m = std::make_unique<StudentModel>(StudentModel::load(cfg.model));
        const EvalResult ev = evaluate(m->parser(), tb);
        result["n_tokens"] = ev.n_tokens;
        result["uas"] = ev.uas;
        result["las"] = ev.las;
        order_model = std::move(m);
    } else if (kind == "teacher") {
        order_model = std::make_unique<TeacherModel>(TeacherModel::load(cfg.model));
    } else {
        throw std::runtime_error(cfg.model + ": unrecognized checkpoint kind '" + kind + "'");
    }

    TypologyVector predicted;
    if (order_model) {
        const std::vector<TripleKey> keys = select_triples(tb, cfg.triples);
        predicted = predicted_order_frequency(*order_model, tb, keys);
        result["order_acc"] = order_accuracy(*order_model, tb);
        result["typ_dist"] =
            word_order_distance(predicted, order_feature(tb, keys), cfg.normalized);
    }

    if (!cfg.out.empty()) {
        const fs::path out = make_out_dir(cfg);
        std::ofstream os(out / "evaluate.json");
        if (!os) throw std::runtime_error("cannot write evaluation report");
        os << result.dump(2) << '\n';
        if (order_model) write_typology_csv_file((out / "typology.csv").string(), predicted);
    }
    std::cout << result.dump(2) << '\n';
    return 0;
}

int run_typology(ExperimentConfig cfg, const std::vector<std::string>& paths) {
    if (paths.size() < 2) throw UsageError("typology needs at least two treebank files");
    for (const std::string& p : paths) require_input(p, "treebank");
    std::vector<Treebank> tbs;
    std::vector<std::string> names;
    for (const std::string& p : paths) {
        tbs.push_back(load_treebank(p));
        std::string stem = fs::path(p).stem().string();
        while (std::find(names.begin(), names.end(), stem) != names.end()) stem += "+";
        names.push_back(stem);
    }
    const fs::path out = make_out_dir(cfg);

    const std::vector<TripleKey> keys = select_triples(tbs, cfg.triples);
    std::vector<TypologyVector> features;
    for (std::size_t i = 0; i < tbs.size(); ++i) {
        features.push_back(order_feature(tbs[i], keys));
        write_typology_csv_file((out / (names[i] + ".csv")).string(), features[i]);
    }

    std::ostringstream matrix;
    matrix.precision(17);
    matrix << "language";
    for (const std::string& n : names) matrix << ',' << n;
    matrix << '\n';
    for (std::size_t i = 0; i < features.size(); ++i) {
        matrix << names[i];
        for (std::size_t j = 0; j < features.size(); ++j)
            matrix << ','
                   << (i == j ? 0.0
                              : word_order_distance(features[i], features[j], cfg.normalized));
        matrix << '\n';
    }
    std::ofstream os(out / "matrix.csv");
    if (!os) throw std::runtime_error("cannot write distance matrix");
    os << matrix.str();
    std::cout << matrix.str();
    return 0;
}

int run_synth(ExperimentConfig cfg) {
    require_input(cfg.source, "source treebank");
    require_input(cfg.rules, "rule file");
    const Treebank tb = load_treebank(cfg.source);
    const RuleSet rules = parse_rules_file(cfg.rules);
    const fs::path out = make_out_dir(cfg);

    const Treebank reordered = reorder_synthetic(tb, rules, cfg.seeds.front());
    const std::string dest = (out / "synthetic.conllu").string();
    write_conllu_file(dest, reordered);
    std::cout << dest << '\n';
    return 0;
}

// points: "language,distance,uas[,las]" with an optional header row
struct AnalyzePoints {
    std::vector<std::string> language;
    std::vector<double> distance, uas, las;
    bool has_las = false;
};

AnalyzePoints parse_points_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error(path + ": cannot open");
    AnalyzePoints out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("language,", 0) == 0) continue;
        std::vector<std::string> cols;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) cols.push_back(field);
        if (cols.size() != 3 && cols.size() != 4)
            throw std::runtime_error(path + ": line " + std::to_string(lineno) +
                                     ": expected language,distance,uas[,las]");
        try {
            std::size_t used = 0;
            out.language.push_back(cols[0]);
            out.distance.push_back(std::stod(cols[1], &used));
            if (used != cols[1].size()) throw std::invalid_argument("trailing");
            out.uas.push_back(std::stod(cols[2], &used));
            if (used != cols[2].size()) throw std::invalid_argument("trailing");
            if (cols.size() == 4) {
                out.las.push_back(std::stod(cols[3], &used));
                if (used != cols[3].size()) throw std::invalid_argument("trailing");
            }
        } catch (const std::exception&) {
            throw std::runtime_error(path + ": line " + std::to_string(lineno) +
                                     ": bad numeric field");
        }
    }
    if (!out.las.empty() && out.las.size() != out.distance.size())
        throw std::runtime_error(path + ": las column present on only some rows");
    out.has_las = !out.las.empty();
    return out;
}

int run_analyze(ExperimentConfig cfg, const std::string& points_path) {
    require_input(points_path, "points file");
    const AnalyzePoints pts = parse_points_csv(points_path);
    if (pts.distance.size() < 3)
        throw std::runtime_error("analyze needs at least 3 points, got " +
                                 std::to_string(pts.distance.size()));

    nlohmann::json result;
    result["n"] = pts.distance.size();
    const PearsonResult ru = pearson(pts.distance, pts.uas);
    result["uas"] = {{"r", ru.r}, {"p", ru.p}};
    if (pts.has_las) {
        const PearsonResult rl = pearson(pts.distance, pts.las);
        result["las"] = {{"r", rl.r}, {"p", rl.p}};
    }

    if (!cfg.out.empty()) {
        const fs::path out = make_out_dir(cfg);
        std::ofstream cs(out / "plot.csv");
        if (!cs) throw std::runtime_error("cannot write plot data");
        cs << "language,distance,uas" << (pts.has_las ? ",las" : "") << '\n';
        cs.precision(17);
        for (std::size_t i = 0; i < pts.distance.size(); ++i) {
            cs << pts.language[i] << ',' << pts.distance[i] << ',' << pts.uas[i];
            if (pts.has_las) cs << ',' << pts.las[i];
            cs << '\n';
        }
        std::ofstream js(out / "correlation.json");
        if (!js) throw std::runtime_error("cannot write correlation report");
        js << result.dump(2) << '\n';
    }
    std::cout << result.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-lingual dependency parsing with word-order distillation"};
    app.require_subcommand(1);

    ConfigCli parser_cli, teacher_cli, student_cli, eval_cli, typ_cli, synth_cli, an_cli;
    std::vector<std::string> typology_paths;
    std::string points_path;

    CLI::App* sc_parser = app.add_subcommand("train-parser", "train the backbone parser");
    parser_cli.attach(sc_parser, kTrainKeys + kParserDimKeys + std::vector<std::string>{"lambda1"});

    CLI::App* sc_teacher = app.add_subcommand(
        "train-teacher", "train the order teacher on a treebank (optionally re-headed)");
    teacher_cli.attach(sc_teacher,
                       kTrainKeys + std::vector<std::string>{"model", "pos_dim", "att_layers",
                                                             "att_heads", "head_dim", "ff_dim",
                                                             "mlp_dim", "holdout"});

    CLI::App* sc_student = app.add_subcommand("train-student",
                                              "train the student parser with order supervision");
    student_cli.attach(sc_student,
                       kTrainKeys + kParserDimKeys +
                           std::vector<std::string>{"lambda1", "lambda2", "mode", "teacher",
                                                    "order_mlp_dim", "triples", "normalized"});

    CLI::App* sc_eval = app.add_subcommand("evaluate", "score a checkpoint on a treebank");
    eval_cli.attach(sc_eval, {"model", "source", "out", "triples", "normalized", "min_freq"});

    CLI::App* sc_typ = app.add_subcommand("typology",
                                          "order features and distances for several treebanks");
    typ_cli.attach(sc_typ, {"out", "triples", "normalized"});
    sc_typ->add_option("treebanks", typology_paths, "two or more treebank files");

    CLI::App* sc_synth = app.add_subcommand("synth", "reorder a treebank with direction rules");
    synth_cli.attach(sc_synth, {"source", "rules", "out", "seeds"});

    CLI::App* sc_an = app.add_subcommand("analyze", "correlate distances with transfer scores");
    an_cli.attach(sc_an, {"out"});
    sc_an->add_option("points", points_path, "csv of language,distance,uas[,las]");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(sc_parser)) return run_train_parser(parser_cli.resolve());
        if (app.got_subcommand(sc_teacher)) return run_train_teacher(teacher_cli.resolve());
        if (app.got_subcommand(sc_student)) return run_train_student(student_cli.resolve());
        if (app.got_subcommand(sc_eval)) return run_evaluate(eval_cli.resolve());
        if (app.got_subcommand(sc_typ)) return run_typology(typ_cli.resolve(), typology_paths);
        if (app.got_subcommand(sc_synth)) return run_synth(synth_cli.resolve());
        if (app.got_subcommand(sc_an)) return run_analyze(an_cli.resolve(), points_path);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
