#include "bae/persistence.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace bae {
namespace {

constexpr unsigned char kMagic[4] = {'B', 'A', 'E', '1'};
constexpr std::size_t kHeader = 16;  // magic, version, payload length
constexpr std::size_t kTrailer = 4;  // crc32

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void shape(const Shape& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        for (auto d : s) u64(d);
    }
    std::vector<unsigned char>& bytes() { return out_; }

private:
    std::vector<unsigned char> out_;
};

class Reader {
public:
    Reader(const unsigned char* data, std::size_t size) : p_(data), end_(data + size), begin_(data) {}

    std::uint8_t u8() { return *take(1); }
    std::uint32_t u32() {
        const unsigned char* b = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    std::uint64_t u64() {
        const unsigned char* b = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::size_t count(std::uint64_t limit, const char* what) {
        const std::uint64_t v = u64();
        if (v > limit) fail(std::string("implausible ") + what + " " + std::to_string(v));
        return static_cast<std::size_t>(v);
    }
    Shape shape() {
        const std::uint32_t rank = u32();
        if (rank > 8) fail("implausible tensor rank " + std::to_string(rank));
        Shape s(rank);
        for (auto& d : s) d = count(std::uint64_t{1} << 32, "dimension");
        return s;
    }
    bool done() const { return p_ == end_; }
    [[noreturn]] void fail(const std::string& msg) const {
        throw ArchiveError("model payload offset " + std::to_string(p_ - begin_) + ": " + msg);
    }

private:
    const unsigned char* take(std::size_t n) {
        if (static_cast<std::size_t>(end_ - p_) < n) fail("unexpected end of payload");
        const unsigned char* r = p_;
        p_ += n;
        return r;
    }
    const unsigned char* p_;
    const unsigned char* end_;
    const unsigned char* begin_;
};

void write_layer(Writer& w, const LayerSpec& layer) {
    w.u8(static_cast<std::uint8_t>(kind_of(layer)));
    std::visit(
        [&](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Dense>) {
                w.u64(l.in_units);
                w.u64(l.out_units);
            } else if constexpr (std::is_same_v<T, Conv2d>) {
                for (auto v : {l.in_channels, l.out_channels, l.kernel, l.stride, l.padding}) w.u64(v);
            } else if constexpr (std::is_same_v<T, Activation>) {
                w.u8(static_cast<std::uint8_t>(l.fn));
                w.f64(l.alpha);
            } else if constexpr (std::is_same_v<T, Reshape>) {
                w.shape(l.target);
            }
        },
        layer);
}

LayerSpec read_layer(Reader& r) {
    const std::uint8_t kind = r.u8();
    switch (static_cast<LayerKind>(kind)) {
        case LayerKind::dense: {
            Dense d;
            d.in_units = r.count(std::uint64_t{1} << 32, "units");
            d.out_units = r.count(std::uint64_t{1} << 32, "units");
            return d;
        }
        case LayerKind::conv2d: {
            Conv2d c;
            for (auto* f : {&c.in_channels, &c.out_channels, &c.kernel, &c.stride, &c.padding})
                *f = r.count(std::uint64_t{1} << 32, "conv field");
            return c;
        }
        case LayerKind::maxpool2x2: return MaxPool2x2{};
        case LayerKind::upsample2x2: return Upsample2x2{};
        case LayerKind::activation: {
            const std::uint8_t fn = r.u8();
            if (fn > static_cast<std::uint8_t>(ActivationFn::sigmoid)) r.fail("unknown activation " + std::to_string(fn));
            return Activation{static_cast<ActivationFn>(fn), r.f64()};
        }
        case LayerKind::reshape: return Reshape{r.shape()};
    }
    r.fail("unknown layer kind " + std::to_string(kind));
}

void write_spec(Writer& w, const NetworkSpec& spec) {
    w.shape(spec.input_shape);
    w.u64(spec.layers.size());
    for (const auto& l : spec.layers) write_layer(w, l);
}

NetworkSpec read_spec(Reader& r) {
    NetworkSpec spec;
    spec.input_shape = r.shape();
    const std::size_t n = r.count(4096, "layer count");
    for (std::size_t i = 0; i < n; ++i) spec.layers.push_back(read_layer(r));
    return spec;
}

void write_params(Writer& w, const Network& net) {
    w.u64(net.params().size());
    for (const auto& t : net.params()) {
        w.shape(t.shape());
        for (double v : t.data()) w.f64(v);
    }
}

Network read_network(Reader& r, const NetworkSpec& spec, const char* which) {
    Network net;
    try {
        net = Network(spec);
    } catch (const ShapeError& e) {
        r.fail(std::string(which) + " spec is inconsistent: " + e.what());
    }
    const std::size_t n = r.count(1 << 16, "tensor count");
    if (n != net.params().size()) {
        r.fail(std::string(which) + " has " + std::to_string(n) + " tensors, spec needs " +
               std::to_string(net.params().size()));
    }
    for (auto& t : net.params()) {
        const Shape s = r.shape();
        if (s != t.shape()) r.fail(std::string(which) + " tensor shape " + to_string(s) + " != " + to_string(t.shape()));
        for (double& v : t.data()) v = r.f64();
    }
    return net;
}

std::uint32_t crc_of(const unsigned char* data, std::size_t size) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths
    while (size > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
        crc = crc32(crc, data, chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

std::vector<unsigned char> serialize_model(const EnsembleModel& model) {
    model.validate();
    Writer payload;
    payload.u64(model.encoders.size());
    payload.u64(model.trained_stages);
    write_spec(payload, model.encoders.front().spec());
    write_spec(payload, model.decoder.spec());
    for (const auto& e : model.encoders) write_params(payload, e);
    write_params(payload, model.decoder);

    const auto& body = payload.bytes();
    Writer file;
    for (unsigned char c : kMagic) file.u8(c);
    file.u32(kModelFormatVersion);
    file.u64(body.size());
    file.bytes().insert(file.bytes().end(), body.begin(), body.end());
    file.u32(crc_of(body.data(), body.size()));
    return std::move(file.bytes());
}

EnsembleModel deserialize_model(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < kHeader + kTrailer) throw ArchiveError("model file truncated: " + std::to_string(bytes.size()) + " bytes");
    if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) throw ArchiveError("not a model file (bad magic)");
    Reader head(bytes.data() + 4, 12);
    const std::uint32_t version = head.u32();
    if (version != kModelFormatVersion) {
        throw ArchiveError("unsupported model format version " + std::to_string(version) + " (this build reads version " +
                           std::to_string(kModelFormatVersion) + ")");
    }
    const std::uint64_t length = head.u64();
    if (length != bytes.size() - kHeader - kTrailer) {
        throw ArchiveError("model file truncated or padded: header declares " + std::to_string(length) +
                           " payload bytes, file holds " + std::to_string(bytes.size() - kHeader - kTrailer));
    }
    const unsigned char* body = bytes.data() + kHeader;
    Reader tail(body + length, kTrailer);
    const std::uint32_t stored = tail.u32();
    if (stored != crc_of(body, length)) throw ArchiveError("model file checksum mismatch (file is corrupted)");

    Reader r(body, length);
    EnsembleModel model;
    const std::size_t m = r.count(1 << 16, "encoder count");
    if (m == 0) r.fail("encoder count is zero");
    model.trained_stages = r.count(m, "trained stage count");
    const NetworkSpec enc = read_spec(r);
    const NetworkSpec dec = read_spec(r);
    for (std::size_t j = 0; j < m; ++j) model.encoders.push_back(read_network(r, enc, "encoder"));
    model.decoder = read_network(r, dec, "decoder");
    if (!r.done()) r.fail("trailing bytes in payload");
    try {
        model.validate();
    } catch (const ShapeError& e) {
        throw ArchiveError(std::string("model file describes an invalid ensemble: ") + e.what());
    }
    return model;
}

void save_model(const EnsembleModel& model, const std::string& path) {
    const auto bytes = serialize_model(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model to '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

EnsembleModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArchiveError("cannot open model file '" + path + "'");
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

std::optional<double> EvalReport::find(const std::string& name, const std::string& method) const {
    for (const auto& m : metrics)
        if (m.name == name && (method.empty() || m.method == method)) return m.value;
    return std::nullopt;
}

void EvalReport::merge(const EvalReport& other) {
    metrics.insert(metrics.end(), other.metrics.begin(), other.metrics.end());
    trace.append(other.trace);
    if (other.config.is_object()) config.update(other.config);
}

nlohmann::json to_json(const EvalReport& report) {
    using nlohmann::json;
    json metrics = json::array();
    for (const auto& m : report.metrics) {
        if (!std::isfinite(m.value)) throw std::invalid_argument("metric '" + m.name + "' is not finite");
        json j{{"name", m.name}, {"value", m.value}, {"method", m.method}};
        j["stage"] = m.stage ? json(*m.stage) : json(nullptr);
        j["class"] = m.class_label ? json(*m.class_label) : json(nullptr);
        metrics.push_back(std::move(j));
    }
    json trace = json::array();
    for (const auto& r : report.trace.rows) {
        trace.push_back({{"stage", r.stage},
                         {"iteration", r.iteration},
                         {"train_mse", r.train_mse},
                         {"val_mse", r.val_mse ? json(*r.val_mse) : json(nullptr)}});
    }
    return {{"run_id", report.run_id}, {"config", report.config}, {"metrics", metrics}, {"trace", trace}};
}

EvalReport report_from_json(const nlohmann::json& doc) {
    EvalReport report;
    report.run_id = doc.at("run_id").get<std::string>();
    report.config = doc.at("config");
    for (const auto& j : doc.at("metrics")) {
        MetricRecord m;
        m.name = j.at("name").get<std::string>();
        m.value = j.at("value").get<double>();
        m.method = j.at("method").get<std::string>();
        if (!j.at("stage").is_null()) m.stage = j.at("stage").get<std::size_t>();
        if (!j.at("class").is_null()) m.class_label = j.at("class").get<int>();
        report.metrics.push_back(std::move(m));
    }
    for (const auto& j : doc.at("trace")) {
        TraceRow r;
        r.stage = j.at("stage").get<std::size_t>();
        r.iteration = j.at("iteration").get<std::size_t>();
        r.train_mse = j.at("train_mse").get<double>();
        if (!j.at("val_mse").is_null()) r.val_mse = j.at("val_mse").get<double>();
        report.trace.append(r);
    }
    return report;
}

void emit_report(const EvalReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (!fs::is_directory(root)) throw std::runtime_error("cannot create report directory '" + dir + "'");

    write_text(root / "report.json", to_json(report).dump(2) + "\n");

    std::ostringstream trace;
    trace << "stage,iteration,train_mse,val_mse\n";
    for (const auto& r : report.trace.rows) {
        trace << r.stage << ',' << r.iteration << ',' << fmt_double(r.train_mse) << ','
              << (r.val_mse ? fmt_double(*r.val_mse) : "") << '\n';
    }
    write_text(root / "trace.csv", trace.str());

    std::ostringstream metrics, auc;
    metrics << "name,value,method,stage,class\n";
    auc << "method,class,auc\n";
    // method -> nmi_best, nmi_mean, nmi_std, in first-seen order
    std::vector<std::pair<std::string, std::map<std::string, double>>> nmi_rows;
    for (const auto& m : report.metrics) {
        metrics << m.name << ',' << fmt_double(m.value) << ',' << m.method << ','
                << (m.stage ? std::to_string(*m.stage) : "") << ',' << (m.class_label ? std::to_string(*m.class_label) : "")
                << '\n';
        if (m.name == "auc") {
            auc << m.method << ',' << (m.class_label ? std::to_string(*m.class_label) : "") << ',' << fmt_double(m.value)
                << '\n';
        }
        if (m.name.rfind("nmi_", 0) == 0) {
            auto it = std::find_if(nmi_rows.begin(), nmi_rows.end(), [&](const auto& p) { return p.first == m.method; });
            if (it == nmi_rows.end()) it = nmi_rows.insert(nmi_rows.end(), {m.method, {}});
            it->second[m.name] = m.value;
        }
    }
    write_text(root / "metrics.csv", metrics.str());
    write_text(root / "auc.csv", auc.str());
    std::ostringstream nmi;
    nmi << "method,nmi_best,nmi_mean,nmi_std\n";
    for (const auto& [method, vals] : nmi_rows) {
        nmi << method;
        for (const char* key : {"nmi_best", "nmi_mean", "nmi_std"}) {
            const auto it = vals.find(key);
            nmi << ',' << (it == vals.end() ? "" : fmt_double(it->second));
        }
        nmi << '\n';
    }
    write_text(root / "nmi.csv", nmi.str());
}

EvalReport load_report(const std::string& dir) {
    const auto path = std::filesystem::path(dir) / "report.json";
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    return report_from_json(nlohmann::json::parse(in));
}

}  // namespace bae
