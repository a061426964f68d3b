#include "bae/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "bae/anomaly.hpp"
#include "bae/gradcheck.hpp"
#include "bae/persistence.hpp"

namespace bae::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Every recognised key with its default. null defaults accept any JSON type
// and are checked where they are consumed.
const json& defaults() {
    static const json d = {
        {"run_id", ""},
        {"seed", 0u},
        {"out", "bae-out"},
        {"init", "paper_normal"},
        {"desk_scale", false},
        {"dataset",
         {{"kind", "synth-images"},
          {"images", nullptr},
          {"labels", nullptr},
          {"test_images", nullptr},
          {"test_labels", nullptr},
          {"paths", nullptr},
          {"test_paths", nullptr},
          {"path", nullptr},
          {"test_path", nullptr},
          {"label_column", nullptr},
          {"normalize", "none"},
          {"max_samples", 0u},
          {"split", {0.9, 0.1, 0.0}},
          {"n", 2000u},
          {"classes", 2u},
          {"size", 8u},
          {"noise", 0.05},
          {"dim", 8u},
          {"spread", 0.05}}},
        {"architecture",
         {{"preset", nullptr}, {"dense", nullptr}, {"encoder", nullptr}, {"hidden", "relu"}, {"output", "sigmoid"}}},
        {"boost", {{"M", 20u}, {"I", 2000u}, {"Q", 50u}, {"val_every", 100u}}},
        {"single", {{"epochs", 50u}, {"batch_size", 50u}, {"val_every", 0u}}},
        {"adam", {{"lr", 1e-3}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}}},
        {"anomaly", {{"normal_classes", json::array()}, {"val_fraction", 0.1}, {"test_fraction", 0.2}, {"methods", {"boosted-ae"}}}},
        {"cluster",
         {{"k", 0u},
          {"init", "kmeans++"},
          {"restarts", 10u},
          {"max_iter", 300u},
          {"tol", 1e-8},
          {"seeds", {0u, 1u, 2u, 3u, 4u}},
          {"reducers", {"boosted-ae", "pca"}},
          {"pca_dims", 0u},
          {"pca_variance", nullptr}}},
    };
    return d;
}

const std::vector<std::string> kDense = {"32", "8"};

std::string type_name(const json& j) {
    if (j.is_number_unsigned()) return "a nonnegative integer";
    if (j.is_number()) return "a number";
    if (j.is_string()) return "a string";
    if (j.is_boolean()) return "true or false";
    if (j.is_array()) return "a list";
    if (j.is_object()) return "an object";
    return "null";
}

bool same_kind(const json& want, const json& got) {
    if (want.is_null()) return true;
    if (want.is_number_unsigned()) return got.is_number_unsigned() || (got.is_number_integer() && got.get<long long>() >= 0);
    if (want.is_number()) return got.is_number();
    return want.type() == got.type();
}

void merge_into(json& base, const json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError(path.empty() ? "config must be a JSON object" : path + ": must be an object");
    for (const auto& [key, value] : user.items()) {
        const std::string field = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) throw ConfigError(field + ": unknown setting");
        json& slot = base[key];
        if (slot.is_object() && !slot.empty()) {
            merge_into(slot, value, field);
            continue;
        }
        if (!same_kind(slot, value)) throw ConfigError(field + ": expected " + type_name(slot) + ", got " + value.dump());
        slot = value.is_number_integer() && slot.is_number_unsigned() ? json(value.get<std::uint64_t>()) : value;
    }
}

template <class T>
T need(const json& cfg, const std::string& path) {
    const json* node = &cfg;
    std::string::size_type start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        node = &node->at(path.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    try {
        return node->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + ": unexpected value " + node->dump());
    }
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

void require_file(const json& value, const std::string& field) {
    require(value.is_string(), field + ": expected a file path");
    require(fs::is_regular_file(value.get<std::string>()), field + ": file not found: " + value.get<std::string>());
}

std::size_t trim_int(const std::string& s, const std::string& layer) {
    std::size_t pos = 0;
    std::size_t v = 0;
    try {
        v = std::stoul(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || s.find_first_not_of(" ", pos) != std::string::npos || s.find('-') != std::string::npos) {
        throw ConfigError("layer '" + layer + "': expected a nonnegative integer, got '" + s + "'");
    }
    return v;
}

std::vector<std::string> split_args(const std::string& inside) {
    std::vector<std::string> out;
    std::stringstream ss(inside);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

Dataset cap_samples(Dataset d, std::size_t max_samples, std::uint64_t seed) {
    if (max_samples == 0 || d.size() <= max_samples) return d;
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0xCA9));
    shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_samples);
    std::sort(idx.begin(), idx.end());
    return d.subset(idx);
}

void finish_dataset(Dataset& d, const json& cfg) {
    if (need<std::string>(cfg, "dataset.normalize") == "minmax") minmax_normalize(d);
    for (double v : d.samples.data()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ConfigError("dataset: values must lie in [0,1] (set dataset.normalize to \"minmax\")");
        }
    }
}

std::string out_dir(const json& cfg) { return need<std::string>(cfg, "out"); }

EvalReport base_report(const json& cfg, const Architecture* arch) {
    EvalReport r;
    r.run_id = need<std::string>(cfg, "run_id");
    r.config = cfg;
    if (arch) {
        json enc = json::array(), dec = json::array();
        for (const auto& l : arch->encoder.layers) enc.push_back(describe(l));
        for (const auto& l : arch->decoder.layers) dec.push_back(describe(l));
        r.config["resolved_architecture"] = {{"name", arch->name},
                                             {"input_shape", arch->encoder.input_shape},
                                             {"encoder", enc},
                                             {"decoder", dec}};
    }
    return r;
}

const Tensor* nonempty(const Dataset& d) { return d.size() > 0 ? &d.samples : nullptr; }

SplitResult train_val_test(const Dataset& d, const json& cfg) {
    const auto f = need<std::vector<double>>(cfg, "dataset.split");
    return split(d, {f[0], f[1], f[2]}, need<std::uint64_t>(cfg, "seed"));
}

BoostResult run_boosted(const Architecture& arch, const Tensor& train, const Tensor* val, const json& cfg,
                        std::ostream& log) {
    const BoostConfig bc = boost_config(cfg);
    log << "training boosted ensemble: M=" << bc.num_encoders << " I=" << bc.iterations_per_stage
        << " Q=" << bc.batch_size << " on " << train.dim(0) << " samples\n";
    return train_boosted(arch.encoder, arch.decoder, train, val, bc,
                         [&](std::size_t m, const EnsembleModel& model, const SampleWeights&) {
                             log << "  stage " << m << "/" << bc.num_encoders
                                 << " train mse " << reconstruction_mse(model, m, train) << '\n';
                         });
}

BoostResult run_single(const Architecture& arch, const Tensor& train, const Tensor* val, const json& cfg,
                       std::ostream& log) {
    const SingleConfig sc = single_config(cfg);
    log << "training single autoencoder: epochs=" << sc.epochs << " batch=" << sc.batch_size << " on "
        << train.dim(0) << " samples\n";
    return train_single_ae(arch.encoder, arch.decoder, train, val, sc);
}

void add_training_metrics(EvalReport& report, const BoostResult& r, const Tensor& train, const Tensor* val,
                          const std::string& method, std::size_t presentations) {
    const std::size_t M = r.model.num_encoders();
    for (const auto& row : r.trace.rows) {
        // stage-end validation points
        if (row.val_mse && method == "boosted-ae" && (&row == &r.trace.rows.back() || (&row + 1)->stage != row.stage))
            report.add({"val_mse", *row.val_mse, method, row.stage, std::nullopt});
    }
    report.add({"train_mse", reconstruction_mse(r.model, M, train), method, std::nullopt, std::nullopt});
    if (val) report.add({"final_val_mse", reconstruction_mse(r.model, M, *val), method, std::nullopt, std::nullopt});
    report.add({"sample_presentations", static_cast<double>(presentations), method, std::nullopt, std::nullopt});
}

EnsembleModel checked_model(const std::string& path, const Shape& sample_shape) {
    EnsembleModel model = load_model(path);
    if (model.encoders.front().input_shape() != sample_shape) {
        throw ConfigError("--model: model expects samples of shape " + to_string(model.encoders.front().input_shape()) +
                          " but the dataset has " + to_string(sample_shape));
    }
    if (model.trained_stages != model.num_encoders()) throw ConfigError("--model: model is not fully trained");
    return model;
}

}  // namespace

LayerSpec parse_layer(const std::string& raw) {
    std::string text;
    for (char c : raw)
        if (!std::isspace(static_cast<unsigned char>(c))) text += c;
    const auto open = text.find_first_of("([");
    const std::string name = text.substr(0, open);
    std::vector<std::string> args;
    if (open != std::string::npos) {
        const char close = text[open] == '(' ? ')' : ']';
        if (text.back() != close) throw ConfigError("layer '" + raw + "': unbalanced brackets");
        args = split_args(text.substr(open + 1, text.size() - open - 2));
    }
    auto nums = [&](std::size_t lo, std::size_t hi) {
        if (args.size() < lo || args.size() > hi) {
            throw ConfigError("layer '" + raw + "': expected " + std::to_string(lo) +
                              (lo == hi ? "" : "-" + std::to_string(hi)) + " arguments");
        }
        std::vector<std::size_t> v;
        for (const auto& a : args) v.push_back(trim_int(a, raw));
        return v;
    };
    if (name == "dense") {
        const auto v = nums(2, 2);
        return Dense{v[0], v[1]};
    }
    if (name == "conv2d") {
        const auto v = nums(3, 5);
        return Conv2d{v[0], v[1], v[2], v.size() > 3 ? v[3] : 1, v.size() > 4 ? v[4] : 0};
    }
    if (name == "maxpool2x2" && args.empty()) return MaxPool2x2{};
    if (name == "upsample2x2" && args.empty()) return Upsample2x2{};
    if (name == "relu" && args.empty()) return relu();
    if (name == "sigmoid" && args.empty()) return sigmoid();
    if (name == "leaky_relu") {
        if (args.empty()) return leaky_relu(0.1);
        if (args.size() != 1) throw ConfigError("layer '" + raw + "': leaky_relu takes one slope");
        double a = 0.0;
        try {
            a = std::stod(args[0]);
        } catch (const std::exception&) {
            throw ConfigError("layer '" + raw + "': slope is not a number");
        }
        if (!(a > 0.0 && a < 1.0)) throw ConfigError("layer '" + raw + "': slope must lie in (0,1)");
        return leaky_relu(a);
    }
    if (name == "reshape") {
        Shape s;
        for (const auto& a : args) s.push_back(trim_int(a, raw));
        if (s.empty()) throw ConfigError("layer '" + raw + "': reshape needs a target shape");
        return Reshape{s};
    }
    throw ConfigError("unknown layer '" + raw + "'");
}

json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config: cannot open '" + path + "'");
    try {
        return json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("--config: '" + path + "' is not valid JSON: " + e.what());
    }
}

json resolve_config(const json& user, const Overrides& ov) {
    json cfg = defaults();
    if (!user.is_null()) merge_into(cfg, user, "");
    if (ov.seed) cfg["seed"] = *ov.seed;
    if (ov.out) cfg["out"] = *ov.out;
    if (ov.preset) cfg["architecture"]["preset"] = *ov.preset;
    if (ov.desk_scale) cfg["desk_scale"] = true;
    if (cfg["desk_scale"].get<bool>()) {
        cfg["boost"]["M"] = 3u;
        cfg["boost"]["I"] = 50u;
        cfg["boost"]["Q"] = 16u;
        cfg["boost"]["val_every"] = 10u;
        cfg["single"]["epochs"] = 5u;
        cfg["single"]["batch_size"] = 16u;
        cfg["dataset"]["n"] = std::min<std::uint64_t>(cfg["dataset"]["n"].get<std::uint64_t>(), 500);
        const auto cap = cfg["dataset"]["max_samples"].get<std::uint64_t>();
        cfg["dataset"]["max_samples"] = cap == 0 ? 500u : std::min<std::uint64_t>(cap, 500);
    }

    const json& ds = cfg["dataset"];
    const std::string kind = ds["kind"];
    if (kind == "idx") {
        require_file(ds["images"], "dataset.images");
        if (!ds["labels"].is_null()) require_file(ds["labels"], "dataset.labels");
        if (!ds["test_images"].is_null()) require_file(ds["test_images"], "dataset.test_images");
        if (!ds["test_labels"].is_null()) require_file(ds["test_labels"], "dataset.test_labels");
    } else if (kind == "cifar") {
        require(ds["paths"].is_array() && !ds["paths"].empty(), "dataset.paths: expected a nonempty list of files");
        for (const auto& p : ds["paths"]) require_file(p, "dataset.paths");
        if (!ds["test_paths"].is_null()) {
            require(ds["test_paths"].is_array(), "dataset.test_paths: expected a list of files");
            for (const auto& p : ds["test_paths"]) require_file(p, "dataset.test_paths");
        }
    } else if (kind == "csv") {
        require_file(ds["path"], "dataset.path");
        if (!ds["test_path"].is_null()) require_file(ds["test_path"], "dataset.test_path");
        require(ds["label_column"].is_null() || (ds["label_column"].is_number_integer() && ds["label_column"] >= 0),
                "dataset.label_column: expected a nonnegative integer");
    } else if (kind == "synth-images") {
        require(ds["n"].get<std::uint64_t>() >= 2, "dataset.n: must be >= 2");
        require(ds["classes"].get<std::uint64_t>() >= 1 && ds["classes"].get<std::uint64_t>() <= 6,
                "dataset.classes: synthetic images support 1..6 classes");
        require(ds["size"].get<std::uint64_t>() >= 3, "dataset.size: must be >= 3");
        require(ds["noise"].get<double>() >= 0.0, "dataset.noise: must be >= 0");
    } else if (kind == "synth-blobs") {
        require(ds["n"].get<std::uint64_t>() >= 2, "dataset.n: must be >= 2");
        require(ds["classes"].get<std::uint64_t>() >= 1, "dataset.classes: must be >= 1");
        require(ds["dim"].get<std::uint64_t>() >= 1, "dataset.dim: must be >= 1");
        require(ds["spread"].get<double>() >= 0.0, "dataset.spread: must be >= 0");
    } else {
        throw ConfigError("dataset.kind: unknown kind '" + kind + "' (idx, cifar, csv, synth-images, synth-blobs)");
    }
    const std::string norm = ds["normalize"];
    require(norm == "none" || norm == "minmax", "dataset.normalize: expected \"none\" or \"minmax\"");
    const auto fr = ds["split"];
    require(fr.size() == 3 && std::all_of(fr.begin(), fr.end(), [](const json& v) { return v.is_number() && v >= 0.0; }),
            "dataset.split: expected three nonnegative fractions [train, val, test]");
    require(std::abs(fr[0].get<double>() + fr[1].get<double>() + fr[2].get<double>() - 1.0) < 1e-9,
            "dataset.split: fractions must sum to 1");
    require(fr[0].get<double>() > 0.0, "dataset.split: the training fraction must be positive");

    const json& arch = cfg["architecture"];
    const int chosen = !arch["preset"].is_null() + !arch["dense"].is_null() + !arch["encoder"].is_null();
    require(chosen <= 1, "architecture: set only one of preset, dense, encoder");
    if (!arch["preset"].is_null()) {
        require(arch["preset"].is_string(), "architecture.preset: expected a string");
        const auto names = preset_names();
        require(std::find(names.begin(), names.end(), arch["preset"].get<std::string>()) != names.end(),
                "architecture.preset: unknown preset '" + arch["preset"].get<std::string>() + "'");
    }
    if (!arch["dense"].is_null()) {
        require(arch["dense"].is_array() && !arch["dense"].empty() &&
                    std::all_of(arch["dense"].begin(), arch["dense"].end(),
                                [](const json& v) { return v.is_number_integer() && v.get<long long>() > 0; }),
                "architecture.dense: expected a nonempty list of positive widths");
    }
    if (!arch["encoder"].is_null()) {
        require(arch["encoder"].is_array() && !arch["encoder"].empty(), "architecture.encoder: expected a list of layers");
        for (const auto& l : arch["encoder"]) {
            require(l.is_string(), "architecture.encoder: layers are strings such as \"conv2d(1,8,4,2,1)\"");
            parse_layer(l.get<std::string>());
        }
    }
    for (const char* key : {"hidden", "output"}) {
        const LayerSpec l = parse_layer(arch[key].get<std::string>());
        require(kind_of(l) == LayerKind::activation, std::string("architecture.") + key + ": must be an activation");
    }

    const json& b = cfg["boost"];
    require(b["M"].get<std::uint64_t>() >= 1, "boost.M: must be >= 1");
    require(b["I"].get<std::uint64_t>() >= 1, "boost.I: must be >= 1");
    require(b["Q"].get<std::uint64_t>() >= 1, "boost.Q: must be >= 1");
    require(cfg["single"]["batch_size"].get<std::uint64_t>() >= 1, "single.batch_size: must be >= 1");
    try {
        AdamConfig{cfg["adam"]["lr"], cfg["adam"]["beta1"], cfg["adam"]["beta2"], cfg["adam"]["eps"]}.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("adam: ") + e.what());
    }
    try {
        parse_init_scheme(cfg["init"]);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("init: ") + e.what());
    }
    const json& an = cfg["anomaly"];
    for (const char* key : {"val_fraction", "test_fraction"}) {
        const double v = an[key];
        require(v > 0.0 && v < 1.0, std::string("anomaly.") + key + ": must lie in (0,1)");
    }
    for (const auto& c : an["normal_classes"]) require(c.is_number_integer() && c >= 0, "anomaly.normal_classes: expected class indices");
    require(!an["methods"].empty(), "anomaly.methods: expected at least one method");
    for (const auto& m : an["methods"])
        require(m == "boosted-ae" || m == "single-ae", "anomaly.methods: expected \"boosted-ae\" or \"single-ae\"");
    const json& cl = cfg["cluster"];
    try {
        parse_kmeans_init(cl["init"]);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("cluster.init: ") + e.what());
    }
    require(cl["restarts"].get<std::uint64_t>() >= 1, "cluster.restarts: must be >= 1");
    require(cl["max_iter"].get<std::uint64_t>() >= 1, "cluster.max_iter: must be >= 1");
    require(!cl["seeds"].empty(), "cluster.seeds: expected at least one seed");
    for (const auto& s : cl["seeds"]) require(s.is_number_integer() && s >= 0, "cluster.seeds: expected nonnegative integers");
    require(!cl["reducers"].empty(), "cluster.reducers: expected at least one reducer");
    for (const auto& r : cl["reducers"])
        require(r == "boosted-ae" || r == "single-ae" || r == "pca" || r == "raw",
                "cluster.reducers: expected boosted-ae, single-ae, pca or raw");
    require(cl["pca_variance"].is_null() || (cl["pca_variance"].is_number() && cl["pca_variance"] > 0.0 && cl["pca_variance"] <= 1.0),
            "cluster.pca_variance: must lie in (0,1]");
    return cfg;
}

Dataset load_dataset(const json& cfg) {
    const json& ds = cfg.at("dataset");
    const std::string kind = ds.at("kind");
    const auto seed = need<std::uint64_t>(cfg, "seed");
    Dataset d;
    if (kind == "idx") {
        d = load_idx(ds["images"], ds["labels"].is_null() ? std::string{} : ds["labels"].get<std::string>());
    } else if (kind == "cifar") {
        d = load_cifar_binary(ds["paths"].get<std::vector<std::string>>());
    } else if (kind == "csv") {
        std::optional<std::size_t> col;
        if (!ds["label_column"].is_null()) col = ds["label_column"].get<std::size_t>();
        d = load_csv(ds["path"], col);
    } else if (kind == "synth-images") {
        d = synth_images(ds["n"], ds["classes"], ds["size"], ds["noise"], derive_seed(seed, 0xDA7A));
    } else {
        d = synth_blobs(ds["n"], ds["classes"], ds["dim"], ds["spread"], derive_seed(seed, 0xDA7A));
    }
    d = cap_samples(std::move(d), ds["max_samples"], seed);
    finish_dataset(d, cfg);
    return d;
}

std::optional<Dataset> load_test_dataset(const json& cfg) {
    const json& ds = cfg.at("dataset");
    const std::string kind = ds.at("kind");
    Dataset d;
    if (kind == "idx" && !ds["test_images"].is_null()) {
        d = load_idx(ds["test_images"], ds["test_labels"].is_null() ? std::string{} : ds["test_labels"].get<std::string>());
    } else if (kind == "cifar" && !ds["test_paths"].is_null()) {
        d = load_cifar_binary(ds["test_paths"].get<std::vector<std::string>>());
    } else if (kind == "csv" && !ds["test_path"].is_null()) {
        std::optional<std::size_t> col;
        if (!ds["label_column"].is_null()) col = ds["label_column"].get<std::size_t>();
        d = load_csv(ds["test_path"], col);
    } else {
        return std::nullopt;
    }
    d = cap_samples(std::move(d), ds["max_samples"], derive_seed(need<std::uint64_t>(cfg, "seed"), 1));
    finish_dataset(d, cfg);
    return d;
}

Architecture build_architecture(const json& cfg, const Shape& sample_shape) {
    const json& a = cfg.at("architecture");
    const LayerSpec hidden = parse_layer(a["hidden"]);
    const LayerSpec output = parse_layer(a["output"]);
    Architecture arch;
    try {
        if (!a["preset"].is_null()) {
            arch = preset_architecture(a["preset"]);
        } else if (!a["encoder"].is_null()) {
            NetworkSpec enc{sample_shape, {}};
            for (const auto& l : a["encoder"]) enc.layers.push_back(parse_layer(l));
            arch = {"custom", enc, mirror_decoder(enc, hidden, output)};
        } else {
            const auto widths = a["dense"].is_null() ? std::vector<std::size_t>{32, 8} : a["dense"].get<std::vector<std::size_t>>();
            arch = dense_autoencoder(sample_shape, widths, hidden);
            if (output != sigmoid()) arch.decoder = mirror_decoder(arch.encoder, hidden, output);
        }
    } catch (const ShapeError& e) {
        throw ConfigError(std::string("architecture: ") + e.what());
    }
    if (arch.encoder.input_shape != sample_shape) {
        throw ConfigError("architecture: '" + arch.name + "' expects samples of shape " + to_string(arch.encoder.input_shape) +
                          " but the dataset has " + to_string(sample_shape));
    }
    return arch;
}

BoostConfig boost_config(const json& cfg) {
    BoostConfig c;
    c.num_encoders = need<std::size_t>(cfg, "boost.M");
    c.iterations_per_stage = need<std::size_t>(cfg, "boost.I");
    c.batch_size = need<std::size_t>(cfg, "boost.Q");
    c.val_every = need<std::size_t>(cfg, "boost.val_every");
    c.adam = {need<double>(cfg, "adam.lr"), need<double>(cfg, "adam.beta1"), need<double>(cfg, "adam.beta2"),
              need<double>(cfg, "adam.eps")};
    c.seed = need<std::uint64_t>(cfg, "seed");
    c.init = parse_init_scheme(need<std::string>(cfg, "init"));
    return c;
}

SingleConfig single_config(const json& cfg) {
    SingleConfig c;
    c.epochs = need<std::size_t>(cfg, "single.epochs");
    c.batch_size = need<std::size_t>(cfg, "single.batch_size");
    c.val_every = need<std::size_t>(cfg, "single.val_every");
    c.adam = {need<double>(cfg, "adam.lr"), need<double>(cfg, "adam.beta1"), need<double>(cfg, "adam.beta2"),
              need<double>(cfg, "adam.eps")};
    c.seed = need<std::uint64_t>(cfg, "seed");
    c.init = parse_init_scheme(need<std::string>(cfg, "init"));
    return c;
}

KMeansConfig kmeans_config(const json& cfg, std::size_t default_k) {
    KMeansConfig c;
    const auto k = need<std::size_t>(cfg, "cluster.k");
    c.k = k == 0 ? default_k : k;
    if (c.k == 0) throw ConfigError("cluster.k: cannot infer the cluster count; set it explicitly");
    c.init = parse_kmeans_init(need<std::string>(cfg, "cluster.init"));
    c.restarts = need<std::size_t>(cfg, "cluster.restarts");
    c.max_iter = need<std::size_t>(cfg, "cluster.max_iter");
    c.tol = need<double>(cfg, "cluster.tol");
    return c;
}

int cmd_train_boosted(const json& cfg, std::ostream& log) {
    const Dataset data = load_dataset(cfg);
    const SplitResult parts = train_val_test(data, cfg);
    const Architecture arch = build_architecture(cfg, data.sample_shape());
    const Tensor* val = nonempty(parts.val);
    const BoostResult r = run_boosted(arch, parts.train.samples, val, cfg, log);
    const fs::path out = out_dir(cfg);
    fs::create_directories(out);
    save_model(r.model, (out / "model.bae").string());
    EvalReport report = base_report(cfg, &arch);
    report.trace = r.trace;
    const BoostConfig bc = boost_config(cfg);
    add_training_metrics(report, r, parts.train.samples, val, "boosted-ae",
                         bc.num_encoders * bc.iterations_per_stage * bc.batch_size);
    if (parts.test.size() > 0)
        report.add({"test_mse", reconstruction_mse(r.model, r.model.num_encoders(), parts.test.samples), "boosted-ae",
                    std::nullopt, std::nullopt});
    emit_report(report, out.string());
    log << "wrote " << (out / "model.bae").string() << " and report to " << out.string() << '\n';
    return ExitCode::ok;
}

int cmd_train_single(const json& cfg, std::ostream& log) {
    const Dataset data = load_dataset(cfg);
    const SplitResult parts = train_val_test(data, cfg);
    const Architecture arch = build_architecture(cfg, data.sample_shape());
    const Tensor* val = nonempty(parts.val);
    const BoostResult r = run_single(arch, parts.train.samples, val, cfg, log);
    const fs::path out = out_dir(cfg);
    fs::create_directories(out);
    save_model(r.model, (out / "model.bae").string());
    EvalReport report = base_report(cfg, &arch);
    report.trace = r.trace;
    add_training_metrics(report, r, parts.train.samples, val, "single-ae",
                         single_config(cfg).epochs * parts.train.size());
    if (parts.test.size() > 0)
        report.add({"test_mse", reconstruction_mse(r.model, 1, parts.test.samples), "single-ae", std::nullopt, std::nullopt});
    emit_report(report, out.string());
    log << "wrote " << (out / "model.bae").string() << " and report to " << out.string() << '\n';
    return ExitCode::ok;
}

int cmd_eval_anomaly(const json& cfg, const std::optional<std::string>& model_path, std::ostream& log) {
    const Dataset data = load_dataset(cfg);
    if (!data.has_labels()) throw ConfigError("dataset: anomaly evaluation needs class labels");
    const std::optional<Dataset> test = load_test_dataset(cfg);
    std::vector<int> classes = need<std::vector<int>>(cfg, "anomaly.normal_classes");
    if (classes.empty()) {
        const std::set<int> present(data.labels.begin(), data.labels.end());
        classes.assign(present.begin(), present.end());
    }
    const auto methods = need<std::vector<std::string>>(cfg, "anomaly.methods");
    if (model_path && (classes.size() != 1 || methods.size() != 1)) {
        throw ConfigError("--model: a saved model covers one normal class and one method; set anomaly.normal_classes "
                          "and anomaly.methods to a single entry");
    }
    const Architecture arch = build_architecture(cfg, data.sample_shape());
    const auto seed = need<std::uint64_t>(cfg, "seed");
    const double vf = need<double>(cfg, "anomaly.val_fraction");
    const fs::path out = out_dir(cfg);
    fs::create_directories(out);
    EvalReport report = base_report(cfg, &arch);
    std::map<std::string, std::vector<double>> per_method;
    for (int c : classes) {
        const OneClassSplit split = test ? build_one_class_split(data, *test, c, vf, seed)
                                         : build_one_class_split(data, c, vf, need<double>(cfg, "anomaly.test_fraction"), seed);
        const Tensor* val = split.val.dim(0) > 0 ? &split.val : nullptr;
        for (const auto& method : methods) {
            EnsembleModel model;
            if (model_path) {
                model = checked_model(*model_path, data.sample_shape());
            } else {
                log << "normal class " << c << ", " << method << ": ";
                model = (method == "boosted-ae" ? run_boosted(arch, split.train, val, cfg, log)
                                                : run_single(arch, split.train, val, cfg, log))
                            .model;
                save_model(model, (out / ("model_class" + std::to_string(c) + "_" + method + ".bae")).string());
            }
            const EvalReport part = eval_anomaly(model, split, method);
            const double a = *part.find("auc");
            per_method[method].push_back(a);
            log << "class " << c << " " << method << " auc " << std::fixed << std::setprecision(4) << a
                << std::defaultfloat << '\n';
            report.merge(part);
        }
    }
    for (const auto& [method, aucs] : per_method) {
        report.add({"auc_mean", std::accumulate(aucs.begin(), aucs.end(), 0.0) / static_cast<double>(aucs.size()), method,
                    std::nullopt, std::nullopt});
    }
    emit_report(report, out.string());
    log << "wrote report to " << out.string() << '\n';
    return ExitCode::ok;
}

int cmd_eval_cluster(const json& cfg, const std::optional<std::string>& model_path, std::ostream& log) {
    const Dataset data = load_dataset(cfg);
    const std::optional<Dataset> test = load_test_dataset(cfg);
    const Dataset& eval = test ? *test : data;
    if (!eval.has_labels()) throw ConfigError("dataset: clustering evaluation needs class labels");
    const Architecture arch = build_architecture(cfg, data.sample_shape());
    const KMeansConfig km = kmeans_config(cfg, eval.num_classes);
    const auto reducer_names = need<std::vector<std::string>>(cfg, "cluster.reducers");
    const fs::path out = out_dir(cfg);
    fs::create_directories(out);
    std::vector<Reducer> reducers;
    for (const auto& name : reducer_names) {
        if (name == "boosted-ae" || name == "single-ae") {
            std::shared_ptr<EnsembleModel> model;
            if (model_path && name == "boosted-ae") {
                model = std::make_shared<EnsembleModel>(checked_model(*model_path, data.sample_shape()));
            } else {
                model = std::make_shared<EnsembleModel>(
                    (name == "boosted-ae" ? run_boosted(arch, data.samples, nullptr, cfg, log)
                                          : run_single(arch, data.samples, nullptr, cfg, log))
                        .model);
                save_model(*model, (out / ("model_" + name + ".bae")).string());
            }
            reducers.push_back(ensemble_reducer(model, name));
        } else if (name == "pca") {
            const json& v = cfg["cluster"]["pca_variance"];
            std::size_t dims = need<std::size_t>(cfg, "cluster.pca_dims");
            if (dims == 0) dims = std::min(element_count(arch.encoder.output_shape()), data.samples.row_size());
            reducers.push_back(pca_reducer(v.is_null() ? PcaTarget::dims(dims) : PcaTarget::variance_fraction(v.get<double>())));
        } else {
            reducers.push_back(identity_reducer());
        }
    }
    const auto seeds = need<std::vector<std::uint64_t>>(cfg, "cluster.seeds");
    EvalReport report = base_report(cfg, &arch);
    report.merge(eval_clustering(reducers, eval.samples, eval.labels, km, seeds));
    for (const auto& m : report.metrics)
        if (m.name == "nmi_best") log << m.method << " nmi " << std::fixed << std::setprecision(4) << m.value << std::defaultfloat << '\n';
    emit_report(report, out.string());
    log << "wrote report to " << out.string() << '\n';
    return ExitCode::ok;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t configs_per_kind, const std::optional<std::string>& out,
                  std::ostream& log) {
    const auto results = run_gradcheck(seed, configs_per_kind);
    std::map<std::string, std::pair<double, bool>> kinds;
    EvalReport report;
    report.run_id = "gradcheck-s" + std::to_string(seed);
    report.config = {{"seed", seed}, {"configs_per_kind", configs_per_kind}, {"step", 1e-5}, {"tolerance", 1e-4}};
    for (const auto& r : results) {
        auto& [worst, ok] = kinds.try_emplace(r.kind, 0.0, true).first->second;
        worst = std::max(worst, r.max_rel_error);
        ok = ok && r.passed;
        report.add({"max_rel_error", r.max_rel_error, r.kind, std::nullopt, std::nullopt});
    }
    bool all = true;
    for (const auto& [kind, v] : kinds) {
        log << std::left << std::setw(12) << kind << " max rel error " << std::scientific << std::setprecision(2)
            << v.first << std::defaultfloat << "  " << (v.second ? "PASS" : "FAIL") << '\n';
        all = all && v.second;
    }
    if (out) emit_report(report, *out);
    return all ? ExitCode::ok : ExitCode::runtime_failure;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Boosted autoencoder ensembles: training, anomaly detection and clustering", "bae"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_path, preset, model;
    bool desk = false;
    std::size_t gc_configs = 3;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Master seed");
        sub->add_option("--out", out_path, "Output directory");
        sub->add_flag("--desk-scale", desk, "Shrink M, I, Q and the dataset to a quick desk-scale run");
        sub->add_option("--preset", preset, "Architecture preset");
    };
    CLI::App* tb = app.add_subcommand("train-boosted", "Train a boosted encoder ensemble with a shared decoder");
    CLI::App* ts = app.add_subcommand("train-single", "Train a single autoencoder baseline");
    CLI::App* ea = app.add_subcommand("eval-anomaly", "One-class anomaly detection AUC per normal class");
    CLI::App* ec = app.add_subcommand("eval-cluster", "K-means NMI on ensemble, autoencoder and PCA embeddings");
    CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference check of every layer kind");
    for (auto* s : {tb, ts, ea, ec}) common(s);
    for (auto* s : {ea, ec}) s->add_option("--model", model, "Evaluate this saved model instead of training")->check(CLI::ExistingFile);
    gc->add_option("--seed", seed, "Seed for the probe networks");
    gc->add_option("--configs", gc_configs, "Random configurations per layer kind")->check(CLI::PositiveNumber);
    gc->add_option("--out", out_path, "Write a report to this directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ExitCode::ok : ExitCode::validation_error;
    }

    try {
        if (gc->parsed()) return cmd_gradcheck(seed.value_or(2024), gc_configs, out_path, out);
        const json user = config_path.empty() ? json() : read_config_file(config_path);
        json cfg = resolve_config(user, {seed, out_path, preset, model, desk});
        const CLI::App* sub = app.get_subcommands().front();
        if (cfg["run_id"].get<std::string>().empty())
            cfg["run_id"] = sub->get_name() + "-s" + std::to_string(cfg["seed"].get<std::uint64_t>());
        cfg["command"] = sub->get_name();
        if (sub == tb) return cmd_train_boosted(cfg, out);
        if (sub == ts) return cmd_train_single(cfg, out);
        if (sub == ea) return cmd_eval_anomaly(cfg, model, out);
        return cmd_eval_cluster(cfg, model, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return ExitCode::validation_error;
    } catch (const FormatError& e) {
        err << "data error: " << e.what() << '\n';
        return ExitCode::validation_error;
    } catch (const ArchiveError& e) {
        err << "model error: " << e.what() << '\n';
        return ExitCode::validation_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return ExitCode::runtime_failure;
    }
}

}  // namespace bae::cli
