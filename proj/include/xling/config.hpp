// Experiment configuration: one flat key-value namespace shared by config
// files and command-line flags, with every hyperparameter defaulted and
// unknown keys rejected. Later assignments win, so defaults < file < flags.

#ifndef XLING_CONFIG_HPP
#define XLING_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "xling/distill.hpp"
#include "xling/parser.hpp"
#include "xling/teacher.hpp"

namespace xling {

namespace detail_cfg {

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
    }
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const unsigned long long x = std::stoull(v, &used);
        if (used != v.size() || v[0] == '-') throw std::invalid_argument("trailing");
        return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
        throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument(key + ": expected a boolean, got '" + v + "'");
}

inline std::vector<std::uint64_t> to_seeds(const std::string& key, const std::string& v) {
    std::vector<std::uint64_t> out;
    std::istringstream is(v);
    std::string part;
    while (std::getline(is, part, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoull(part, &used));
            if (used != part.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw std::invalid_argument(key + ": expected comma-separated integers, got '" + v +
                                        "'");
        }
    }
    if (out.empty()) throw std::invalid_argument(key + ": needs at least one seed");
    return out;
}

}  // namespace detail_cfg

struct ExperimentConfig {
    // file paths (empty = not supplied)
    std::string source, target, rules, model, teacher, out;

    // shared training hyperparameters
    std::size_t epochs = 50, batch = 32;
    double lr = 3e-5, weight_decay = 1e-5, beta1 = 0.9, beta2 = 0.9;
    double lambda1 = 1.0, lambda2 = 0.001;

    // parser and student widths
    std::size_t word_dim = 100, pos_dim = 50, lstm_layers = 2, hidden = 100, mlp_dim = 100;
    std::size_t order_mlp_dim = 100;

    // teacher widths and holdout fraction
    std::size_t att_layers = 1, att_heads = 4, head_dim = 16, ff_dim = 100;
    double holdout = 0.1;

    // order-target regime for student training
    std::string mode = "kd";

    // typology options
    std::size_t triples = 52;
    bool normalized = true;

    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::size_t min_freq = 1;

    // assigns one key; unknown keys and malformed values throw
    void set(const std::string& key, const std::string& value) {
        using namespace detail_cfg;
        if (key == "source") source = value;
        else if (key == "target") target = value;
        else if (key == "rules") rules = value;
        else if (key == "model") model = value;
        else if (key == "teacher") teacher = value;
        else if (key == "out") out = value;
        else if (key == "epochs") epochs = to_count(key, value);
        else if (key == "batch") batch = to_count(key, value);
        else if (key == "lr") lr = to_double(key, value);
        else if (key == "weight_decay") weight_decay = to_double(key, value);
        else if (key == "beta1") beta1 = to_double(key, value);
        else if (key == "beta2") beta2 = to_double(key, value);
        else if (key == "lambda1") lambda1 = to_double(key, value);
        else if (key == "lambda2") lambda2 = to_double(key, value);
        else if (key == "word_dim") word_dim = to_count(key, value);
        else if (key == "pos_dim") pos_dim = to_count(key, value);
        else if (key == "lstm_layers") lstm_layers = to_count(key, value);
        else if (key == "hidden") hidden = to_count(key, value);
        else if (key == "mlp_dim") mlp_dim = to_count(key, value);
        else if (key == "order_mlp_dim") order_mlp_dim = to_count(key, value);
        else if (key == "att_layers") att_layers = to_count(key, value);
        else if (key == "att_heads") att_heads = to_count(key, value);
        else if (key == "head_dim") head_dim = to_count(key, value);
        else if (key == "ff_dim") ff_dim = to_count(key, value);
        else if (key == "holdout") holdout = to_double(key, value);
        else if (key == "mode") {
            distill_mode_from(value);  // name check
            mode = value;
        }
        else if (key == "triples") triples = to_count(key, value);
        else if (key == "normalized") normalized = to_bool(key, value);
        else if (key == "seeds") seeds = to_seeds(key, value);
        else if (key == "min_freq") min_freq = to_count(key, value);
        else throw std::invalid_argument("unknown configuration key: " + key);
        validate(key);
    }

    ParserDims parser_dims() const {
        ParserDims d;
        d.word_dim = word_dim;
        d.pos_dim = pos_dim;
        d.lstm_layers = lstm_layers;
        d.hidden = hidden;
        d.mlp_dim = mlp_dim;
        return d;
    }

    TeacherDims teacher_dims() const {
        TeacherDims d;
        d.pos_dim = pos_dim;
        d.att_layers = att_layers;
        d.att_heads = att_heads;
        d.head_dim = head_dim;
        d.ff_dim = ff_dim;
        d.mlp_dim = mlp_dim;
        return d;
    }

    StudentDims student_dims() const {
        StudentDims d;
        d.parser = parser_dims();
        d.order_mlp_dim = order_mlp_dim;
        return d;
    }

    TrainOptions train_options() const {
        TrainOptions o;
        o.epochs = epochs;
        o.batch_size = batch;
        o.lr = lr;
        o.beta1 = beta1;
        o.beta2 = beta2;
        o.weight_decay = weight_decay;
        o.lambda1 = lambda1;
        return o;
    }

    // stable snapshot of every key for reports
    nlohmann::json snapshot() const {
        nlohmann::json j;
        j["source"] = source;
        j["target"] = target;
        j["rules"] = rules;
        j["model"] = model;
        j["teacher"] = teacher;
        j["out"] = out;
        j["epochs"] = epochs;
        j["batch"] = batch;
        j["lr"] = lr;
        j["weight_decay"] = weight_decay;
        j["beta1"] = beta1;
        j["beta2"] = beta2;
        j["lambda1"] = lambda1;
        j["lambda2"] = lambda2;
        j["word_dim"] = word_dim;
        j["pos_dim"] = pos_dim;
        j["lstm_layers"] = lstm_layers;
        j["hidden"] = hidden;
        j["mlp_dim"] = mlp_dim;
        j["order_mlp_dim"] = order_mlp_dim;
        j["att_layers"] = att_layers;
        j["att_heads"] = att_heads;
        j["head_dim"] = head_dim;
        j["ff_dim"] = ff_dim;
        j["holdout"] = holdout;
        j["mode"] = mode;
        j["triples"] = triples;
        j["normalized"] = normalized;
        j["seeds"] = seeds;
        j["min_freq"] = min_freq;
        return j;
    }

private:
    void validate(const std::string& key) const {
        auto bad = [&](const std::string& why) {
            throw std::invalid_argument(key + ": " + why);
        };
        if (lambda1 < 0.0 || lambda2 < 0.0) bad("order weights must be nonnegative");
        if (lr <= 0.0) bad("learning rate must be positive");
        if (weight_decay < 0.0) bad("weight decay must be nonnegative");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            bad("momentum decay rates must lie in [0, 1)");
        if (holdout < 0.0 || holdout >= 1.0) bad("holdout fraction must lie in [0, 1)");
        if (key == "epochs" && epochs == 0) bad("needs at least one epoch");
        if (key == "batch" && batch == 0) bad("batch size must be positive");
        if (key == "triples" && triples == 0) bad("triple count must be positive");
    }
};

// "key = value" lines; '#' starts a comment, blank lines are skipped
inline void load_config(std::istream& is, ExperimentConfig& cfg) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            if (a == std::string::npos) return std::string{};
            const auto b = s.find_last_not_of(" \t");
            return s.substr(a, b - a + 1);
        };
        if (trim(line).empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("line " + std::to_string(lineno) +
                                        ": expected 'key = value', got '" + trim(line) + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw std::invalid_argument("line " + std::to_string(lineno) +
                                        ": empty key or value");
        try {
            cfg.set(key, value);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline void load_config_file(const std::string& path, ExperimentConfig& cfg) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument(path + ": cannot open config file");
    try {
        load_config(is, cfg);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

}  // namespace xling

#endif  // XLING_CONFIG_HPP
