#include "bae/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

#include "bae/rng.hpp"

namespace bae {
namespace {

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& path) {
    if (buf.size() < offset + 4) {
        throw FormatError(path + ": truncated header at offset " + std::to_string(offset));
    }
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void expect_magic(const std::vector<unsigned char>& buf, std::uint32_t magic, const std::string& path) {
    const std::uint32_t got = read_be32(buf, 0, path);
    if (got != magic) {
        std::ostringstream os;
        os << path << ": bad IDX magic at offset 0: expected 0x" << std::hex << magic << ", got 0x" << got;
        throw FormatError(os.str());
    }
}

std::size_t count_classes(const std::vector<int>& labels) {
    if (labels.empty()) return 0;
    return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end()) + 1);
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

// One CSV record; double quotes may wrap a field and "" escapes a quote.
std::vector<std::string> split_record(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

double parse_number(const std::string& field, std::size_t row, std::size_t col) {
    const std::string t = trim(field);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
        throw FormatError("csv row " + std::to_string(row + 1) + " column " + std::to_string(col + 1) +
                          ": not a number: '" + t + "'");
    }
    return v;
}

// Largest-remainder allocation of `total` across groups proportional to `sizes`.
std::vector<std::size_t> apportion(const std::vector<std::size_t>& sizes, std::size_t total) {
    const std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    std::vector<std::size_t> out(sizes.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t given = 0;
    for (std::size_t g = 0; g < sizes.size(); ++g) {
        const double ideal = n == 0 ? 0.0 : static_cast<double>(sizes[g]) * static_cast<double>(total) / static_cast<double>(n);
        out[g] = static_cast<std::size_t>(std::floor(ideal));
        given += out[g];
        rem.emplace_back(ideal - std::floor(ideal), g);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; given < total && i < rem.size(); ++i) {
        if (out[rem[i].second] < sizes[rem[i].second]) {
            ++out[rem[i].second];
            ++given;
        }
    }
    return out;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset d;
    d.samples = samples.gather_rows(indices);
    if (has_labels()) {
        d.labels.reserve(indices.size());
        for (auto i : indices) d.labels.push_back(labels.at(i));
    }
    d.name = name;
    d.num_classes = num_classes;
    return d;
}

std::vector<std::size_t> Dataset::indices_of(int label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) out.push_back(i);
    return out;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_bytes(images_path);
    expect_magic(img, 0x00000803, images_path);
    const std::size_t n = read_be32(img, 4, images_path);
    const std::size_t rows = read_be32(img, 8, images_path);
    const std::size_t cols = read_be32(img, 12, images_path);
    const std::size_t pixels = n * rows * cols;
    if (img.size() < 16 + pixels) {
        throw FormatError(images_path + ": truncated: header declares " + std::to_string(n) + " images of " +
                          std::to_string(rows) + "x" + std::to_string(cols) + " but file has " +
                          std::to_string(img.size() - 16) + " pixel bytes");
    }
    Dataset d;
    d.name = images_path;
    d.samples = Tensor({n, 1, rows, cols});
    for (std::size_t i = 0; i < pixels; ++i) d.samples[i] = static_cast<double>(img[16 + i]) / 255.0;
    if (!labels_path.empty()) {
        const auto lab = read_bytes(labels_path);
        expect_magic(lab, 0x00000801, labels_path);
        const std::size_t nl = read_be32(lab, 4, labels_path);
        if (nl != n) {
            throw FormatError("image/label count mismatch: " + std::to_string(n) + " images vs " + std::to_string(nl) +
                              " labels");
        }
        if (lab.size() < 8 + nl) throw FormatError(labels_path + ": truncated label data");
        d.labels.assign(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(nl));
        d.num_classes = count_classes(d.labels);
    }
    return d;
}

Dataset load_cifar_binary(const std::vector<std::string>& paths) {
    constexpr std::size_t kRecord = 3073, kPixels = 3072;
    std::vector<double> values;
    Dataset d;
    for (const auto& path : paths) {
        const auto buf = read_bytes(path);
        if (buf.size() % kRecord != 0) {
            throw FormatError(path + ": length " + std::to_string(buf.size()) + " is not a multiple of 3073");
        }
        for (std::size_t off = 0; off < buf.size(); off += kRecord) {
            d.labels.push_back(buf[off]);
            for (std::size_t p = 0; p < kPixels; ++p) values.push_back(static_cast<double>(buf[off + 1 + p]) / 255.0);
        }
    }
    d.name = paths.empty() ? "cifar" : paths.front();
    d.samples = Tensor({d.labels.size(), 3, 32, 32}, std::move(values));
    d.num_classes = 10;
    return d;
}

Dataset load_csv(const std::string& path, std::optional<std::size_t> label_column) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path + "'");
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t width = 0, rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split_record(line);
        if (rows == 0) {
            width = fields.size();
            if (label_column && *label_column >= width) {
                throw FormatError("csv: label column " + std::to_string(*label_column) + " out of range for " +
                                  std::to_string(width) + " columns");
            }
            if (label_column && width == 1) throw FormatError("csv: no feature columns besides the label");
        } else if (fields.size() != width) {
            throw FormatError("csv row " + std::to_string(rows + 1) + " has " + std::to_string(fields.size()) +
                              " fields, expected " + std::to_string(width));
        }
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const double v = parse_number(fields[c], rows, c);
            if (label_column && c == *label_column) {
                if (v != std::floor(v) || v < 0) {
                    throw FormatError("csv row " + std::to_string(rows + 1) + ": label must be a nonnegative integer");
                }
                labels.push_back(static_cast<int>(v));
            } else {
                values.push_back(v);
            }
        }
        ++rows;
    }
    if (rows == 0) throw FormatError("csv '" + path + "' is empty");
    Dataset d;
    d.name = path;
    const std::size_t dim = label_column ? width - 1 : width;
    d.samples = Tensor({rows, dim}, std::move(values));
    d.labels = std::move(labels);
    d.num_classes = count_classes(d.labels);
    return d;
}

void minmax_normalize(Dataset& dataset) {
    const std::size_t n = dataset.size();
    if (n == 0) return;
    const std::size_t f = dataset.samples.row_size();
    for (std::size_t c = 0; c < f; ++c) {
        double lo = dataset.samples[c], hi = lo;
        for (std::size_t r = 1; r < n; ++r) {
            lo = std::min(lo, dataset.samples[r * f + c]);
            hi = std::max(hi, dataset.samples[r * f + c]);
        }
        for (std::size_t r = 0; r < n; ++r) {
            double& v = dataset.samples[r * f + c];
            v = hi > lo ? (v - lo) / (hi - lo) : 0.0;
        }
    }
}

SplitResult split(const Dataset& dataset, const std::array<double, 3>& fractions, std::uint64_t seed) {
    for (double f : fractions) {
        if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("split fractions must lie in [0,1]");
    }
    if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
        throw std::invalid_argument("split fractions must sum to 1");
    }
    const std::size_t n = dataset.size();
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions[1]));
    const auto n_test = std::min(n - n_val, static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions[2])));

    // groups: one per class when labeled, else a single group
    std::vector<std::vector<std::size_t>> groups;
    if (dataset.has_labels()) {
        std::vector<int> classes(dataset.labels);
        std::sort(classes.begin(), classes.end());
        classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
        for (int c : classes) groups.push_back(dataset.indices_of(c));
    } else {
        groups.emplace_back(n);
        std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
    }
    std::vector<std::size_t> sizes;
    for (const auto& g : groups) sizes.push_back(g.size());
    const auto val_counts = apportion(sizes, n_val);
    std::vector<std::size_t> left(sizes.size());
    for (std::size_t g = 0; g < sizes.size(); ++g) left[g] = sizes[g] - val_counts[g];
    // test share is apportioned by the full class sizes, capped by what is left
    auto test_counts = apportion(sizes, n_test);
    for (std::size_t g = 0; g < sizes.size(); ++g) test_counts[g] = std::min(test_counts[g], left[g]);

    Rng rng(seed);
    std::vector<std::size_t> tr, va, te;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto idx = groups[g];
        shuffle(idx.begin(), idx.end(), rng);
        va.insert(va.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(val_counts[g]));
        te.insert(te.end(), idx.begin() + static_cast<std::ptrdiff_t>(val_counts[g]),
                  idx.begin() + static_cast<std::ptrdiff_t>(val_counts[g] + test_counts[g]));
        tr.insert(tr.end(), idx.begin() + static_cast<std::ptrdiff_t>(val_counts[g] + test_counts[g]), idx.end());
    }
    for (auto* v : {&tr, &va, &te}) std::sort(v->begin(), v->end());
    return {dataset.subset(tr), dataset.subset(va), dataset.subset(te)};
}

Dataset synth_blobs(std::size_t n, std::size_t k, std::size_t dim, double spread, std::uint64_t seed) {
    if (n == 0 || k == 0 || dim == 0 || spread < 0.0) throw std::invalid_argument("synth_blobs: bad parameters");
    Rng rng(seed);
    std::vector<std::vector<double>> centers;
    const double min_sep = 0.3;
    for (int attempt = 0; centers.size() < k; ++attempt) {
        std::vector<double> c(dim);
        for (double& v : c) v = 0.15 + 0.7 * uniform01(rng);
        bool ok = true;
        for (const auto& o : centers) {
            double d2 = 0.0;
            for (std::size_t f = 0; f < dim; ++f) d2 += (c[f] - o[f]) * (c[f] - o[f]);
            ok = ok && std::sqrt(d2) >= min_sep;
        }
        if (ok || attempt > 10000) centers.push_back(std::move(c));
    }
    Dataset d;
    d.name = "blobs";
    d.num_classes = k;
    d.samples = Tensor({n, dim});
    std::normal_distribution<double> noise(0.0, spread > 0.0 ? spread : 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % k;
        d.labels.push_back(static_cast<int>(c));
        for (std::size_t f = 0; f < dim; ++f) {
            const double v = centers[c][f] + (spread > 0.0 ? noise(rng) : 0.0);
            d.samples[i * dim + f] = std::clamp(v, 0.0, 1.0);
        }
    }
    return d;
}

Dataset synth_images(std::size_t n, std::size_t pattern_classes, std::size_t size, double noise, std::uint64_t seed) {
    if (n == 0 || pattern_classes == 0 || pattern_classes > 6 || size < 3 || noise < 0.0) {
        throw std::invalid_argument("synth_images: need n>0, 1<=pattern_classes<=6, size>=3, noise>=0");
    }
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, noise > 0.0 ? noise : 1.0);
    Dataset d;
    d.name = "bars";
    d.num_classes = pattern_classes;
    d.samples = Tensor({n, 1, size, size});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = i % pattern_classes;
        d.labels.push_back(static_cast<int>(cls));
        double* img = d.samples.data().data() + i * size * size;
        const double level = 0.7 + 0.3 * uniform01(rng);
        const std::size_t pos = 1 + uniform_index(rng, size - 2);
        auto set = [&](std::size_t r, std::size_t c) { img[r * size + c] = level; };
        for (std::size_t t = 0; t < size; ++t) {
            switch (cls) {
                case 0: set(pos, t); break;
                case 1: set(t, pos); break;
                case 2: set(t, (t + pos) % size); break;
                case 3: set(t, (size - 1 - t + pos) % size); break;
                case 4: set(pos, t), set(t, pos); break;
                case 5: {
                    const std::size_t lo = pos / 2, hi = size - 1 - lo;
                    if (t >= lo && t <= hi) set(lo, t), set(hi, t), set(t, lo), set(t, hi);
                    break;
                }
            }
        }
        if (noise > 0.0)
            for (std::size_t p = 0; p < size * size; ++p) img[p] = std::clamp(img[p] + gauss(rng), 0.0, 1.0);
    }
    return d;
}

}  // namespace bae
