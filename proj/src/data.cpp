#include "divreg/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>

#include "divreg/error.hpp"
#include "divreg/rng.hpp"

namespace divreg {

void Dataset::validate() const {
    if (labels.size() != size())
        throw CountMismatch("Dataset: " + std::to_string(size()) + " feature rows vs " +
                            std::to_string(labels.size()) + " labels");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw LabelOutOfRange("Dataset: label " + std::to_string(labels[i]) + " at row " +
                                  std::to_string(i) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    if (!features.all_finite()) throw NumericError("Dataset: non-finite feature");
}

Dataset gen_blobs(std::size_t n_per_class, int num_classes, std::size_t dim, double spread,
                  std::uint64_t seed) {
    if (n_per_class < 1 || num_classes < 1 || dim < 1)
        throw InvalidArgument("gen_blobs: counts must be >= 1");
    if (!(spread > 0.0)) throw InvalidArgument("gen_blobs: spread must be > 0");

    Rng rng(mix_seed(seed, 0x62'6c'6f'62));
    Matrix centers(static_cast<std::size_t>(num_classes), dim);
    for (std::size_t k = 0; k < centers.rows(); ++k)
        for (std::size_t d = 0; d < dim; ++d) centers(k, d) = rng.uniform(-4.0, 4.0);

    const std::size_t n = n_per_class * static_cast<std::size_t>(num_classes);
    Dataset ds;
    ds.features = Matrix(n, dim);
    ds.labels.resize(n);
    ds.num_classes = num_classes;
    std::size_t row = 0;
    for (int k = 0; k < num_classes; ++k) {
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            for (std::size_t d = 0; d < dim; ++d)
                ds.features(row, d) = centers(static_cast<std::size_t>(k), d) + spread * rng.normal();
            ds.labels[row] = k;
        }
    }
    std::ostringstream prov;
    prov << "blobs(n_per_class=" << n_per_class << ",classes=" << num_classes << ",dim=" << dim
         << ",spread=" << spread << ",seed=" << seed << ")";
    ds.provenance = prov.str();
    return ds;
}

Dataset gen_two_moons(std::size_t n, double noise, std::uint64_t seed) {
    if (n < 2) throw InvalidArgument("gen_two_moons: n must be >= 2");
    if (!(noise >= 0.0)) throw InvalidArgument("gen_two_moons: noise must be >= 0");

    Rng rng(mix_seed(seed, 0x6d'6f'6f'6e));
    const std::size_t n_outer = n / 2 + n % 2;
    const std::size_t n_inner = n - n_outer;
    Dataset ds;
    ds.features = Matrix(n, 2);
    ds.labels.resize(n);
    ds.num_classes = 2;

    const double pi = 3.14159265358979323846;
    auto angle = [pi](std::size_t i, std::size_t count) {
        return count > 1 ? pi * static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
    };
    std::size_t row = 0;
    for (std::size_t i = 0; i < n_outer; ++i, ++row) {
        double t = angle(i, n_outer);
        ds.features(row, 0) = std::cos(t) + noise * rng.normal();
        ds.features(row, 1) = std::sin(t) + noise * rng.normal();
        ds.labels[row] = 0;
    }
    for (std::size_t i = 0; i < n_inner; ++i, ++row) {
        double t = angle(i, n_inner);
        ds.features(row, 0) = 1.0 - std::cos(t) + noise * rng.normal();
        ds.features(row, 1) = 0.5 - std::sin(t) + noise * rng.normal();
        ds.labels[row] = 1;
    }
    std::ostringstream prov;
    prov << "two_moons(n=" << n << ",noise=" << noise << ",seed=" << seed << ")";
    ds.provenance = prov.str();
    return ds;
}

namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw TruncatedFile(path + ": truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot open " + images_path);
    std::uint32_t magic = read_u32_be(img, images_path);
    if (magic != 0x00000803u)
        throw BadMagic(images_path + ": expected image magic 0x00000803");
    std::uint32_t count = read_u32_be(img, images_path);
    std::uint32_t rows = read_u32_be(img, images_path);
    std::uint32_t cols = read_u32_be(img, images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot open " + labels_path);
    std::uint32_t lab_magic = read_u32_be(lab, labels_path);
    if (lab_magic != 0x00000801u)
        throw BadMagic(labels_path + ": expected label magic 0x00000801");
    std::uint32_t lab_count = read_u32_be(lab, labels_path);
    if (lab_count != count)
        throw CountMismatch(images_path + " has " + std::to_string(count) + " images but " +
                            labels_path + " has " + std::to_string(lab_count) + " labels");

    const std::size_t pixels = std::size_t(rows) * std::size_t(cols);
    Dataset ds;
    ds.features = Matrix(count, pixels);
    ds.labels.resize(count);

    std::vector<unsigned char> buf(pixels);
    for (std::uint32_t i = 0; i < count; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
        if (static_cast<std::size_t>(img.gcount()) != pixels)
            throw TruncatedFile(images_path + ": truncated at image " + std::to_string(i));
        double* row = ds.features.row(i);
        for (std::size_t p = 0; p < pixels; ++p) row[p] = buf[p] / 255.0;
    }
    int max_label = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        char b;
        lab.read(&b, 1);
        if (lab.gcount() != 1)
            throw TruncatedFile(labels_path + ": truncated at label " + std::to_string(i));
        int v = static_cast<unsigned char>(b);
        ds.labels[i] = v;
        max_label = std::max(max_label, v);
    }
    ds.num_classes = max_label + 1;
    ds.provenance = "idx(" + images_path + "," + labels_path + ")";
    return ds;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
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

bool parse_double(const std::string& field, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(field, &pos);
        while (pos < field.size() && std::isspace(static_cast<unsigned char>(field[pos]))) ++pos;
        return pos == field.size();
    } catch (...) {
        return false;
    }
}

/// Parse a CSV into numeric rows. Skips '#' comments and blank lines; an
/// unparseable first content line is treated as a header when
/// allow_header is set, otherwise it is a ParseError.
std::vector<std::vector<double>> read_csv_rows(const std::string& path, bool allow_header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    bool header_candidate = allow_header;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_fields(line);
        std::vector<double> row(fields.size());
        bool ok = true;
        std::size_t bad_col = 0;
        for (std::size_t cidx = 0; cidx < fields.size(); ++cidx) {
            if (!parse_double(fields[cidx], row[cidx])) {
                ok = false;
                bad_col = cidx;
                break;
            }
        }
        if (!ok) {
            if (header_candidate && rows.empty()) {
                header_candidate = false;
                continue; // single header line
            }
            throw ParseError(path + ": unparseable field at row " + std::to_string(lineno) +
                             ", column " + std::to_string(bad_col + 1));
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError(path + ": row " + std::to_string(lineno) + " has " +
                             std::to_string(row.size()) + " fields, expected " +
                             std::to_string(rows.front().size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError(path + ": no data rows");
    return rows;
}

} // namespace

Dataset load_csv(const std::string& path, std::size_t label_column) {
    auto rows = read_csv_rows(path, /*allow_header=*/true);
    const std::size_t ncols = rows.front().size();
    if (label_column >= ncols)
        throw ParseError(path + ": label column " + std::to_string(label_column) +
                         " out of range, file has " + std::to_string(ncols) + " columns");
    if (ncols < 2) throw ParseError(path + ": need at least one feature column besides labels");

    Dataset ds;
    ds.features = Matrix(rows.size(), ncols - 1);
    ds.labels.resize(rows.size());
    int max_label = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double lv = rows[i][label_column];
        double rounded = std::round(lv);
        if (std::fabs(lv - rounded) > 1e-9 || rounded < 0)
            throw NonIntegerLabel(path + ": label " + std::to_string(lv) + " at row " +
                                  std::to_string(i + 1) + ", column " +
                                  std::to_string(label_column + 1) +
                                  " is not a non-negative integer");
        ds.labels[i] = static_cast<int>(rounded);
        max_label = std::max(max_label, ds.labels[i]);
        std::size_t out_col = 0;
        for (std::size_t cidx = 0; cidx < ncols; ++cidx) {
            if (cidx == label_column) continue;
            ds.features(i, out_col++) = rows[i][cidx];
        }
    }
    ds.num_classes = max_label + 1;
    ds.provenance = "csv(" + path + ",label_column=" + std::to_string(label_column) + ")";
    ds.validate();
    return ds;
}

Matrix load_csv_matrix(const std::string& path) {
    auto rows = read_csv_rows(path, /*allow_header=*/false);
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows.front().size(); ++j) m(i, j) = rows[i][j];
    return m;
}

namespace {

Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& order, std::size_t begin,
                  std::size_t end, const char* part) {
    Dataset out;
    out.features = Matrix(end - begin, ds.dim());
    out.labels.resize(end - begin);
    out.num_classes = ds.num_classes;
    out.provenance = ds.provenance + "/" + part;
    for (std::size_t i = begin; i < end; ++i) {
        std::size_t src = order[i];
        const double* from = ds.features.row(src);
        double* to = out.features.row(i - begin);
        std::copy(from, from + ds.dim(), to);
        out.labels[i - begin] = ds.labels[src];
    }
    return out;
}

} // namespace

Split split(const Dataset& ds, SplitFractions fractions, std::uint64_t seed) {
    const double f[3] = {fractions.train, fractions.val, fractions.test};
    double sum = f[0] + f[1] + f[2];
    for (double v : f)
        if (!(v >= 0.0)) throw InvalidArgument("split: fractions must be >= 0");
    if (std::fabs(sum - 1.0) > 1e-9)
        throw InvalidArgument("split: fractions must sum to 1, got " + std::to_string(sum));

    const std::size_t n = ds.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, 0x73'70'6c'74));
    rng.shuffle(order);

    // largest-remainder apportionment so counts sum exactly to n
    std::size_t counts[3];
    double remainders[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        double exact = f[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(exact);
        remainders[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (remainders[i] > remainders[best]) best = i;
        ++counts[best];
        remainders[best] = -1.0;
        ++assigned;
    }

    Split out;
    std::size_t a = counts[0], b = counts[0] + counts[1];
    out.train = take_rows(ds, order, 0, a, "train");
    out.val = take_rows(ds, order, a, b, "val");
    out.test = take_rows(ds, order, b, n, "test");
    return out;
}

Dataset inject_label_noise(const Dataset& ds, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0))
        throw InvalidArgument("inject_label_noise: rate must be in [0, 1]");
    Dataset out = ds;
    out.provenance = ds.provenance + "+noise(" + std::to_string(rate) + ")";
    if (rate == 0.0) return out;
    if (ds.num_classes < 2)
        throw SingleClass("inject_label_noise: need at least 2 classes to flip labels");

    const std::size_t n = ds.size();
    const std::size_t flips = static_cast<std::size_t>(rate * static_cast<double>(n));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, 0x6e'6f'69'73));
    rng.shuffle(order);
    for (std::size_t i = 0; i < flips; ++i) {
        std::size_t idx = order[i];
        int old = out.labels[idx];
        // uniform over the other num_classes - 1 labels
        int draw = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(ds.num_classes - 1)));
        out.labels[idx] = draw < old ? draw : draw + 1;
    }
    return out;
}

BatchStream::BatchStream(const Dataset& ds, std::size_t batch_size, std::uint64_t seed,
                         std::size_t epoch)
    : ds_(&ds), batch_size_(batch_size) {
    if (batch_size < 1) throw InvalidArgument("BatchStream: batch_size must be >= 1");
    order_.resize(ds.size());
    std::iota(order_.begin(), order_.end(), 0);
    Rng rng(mix_seed(seed, 0xba'7c'00 + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order_);
}

std::optional<BatchStream::Batch> BatchStream::next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t take = std::min(batch_size_, order_.size() - cursor_);
    Batch batch;
    batch.features = Matrix(take, ds_->dim());
    batch.labels.resize(take);
    for (std::size_t i = 0; i < take; ++i) {
        std::size_t src = order_[cursor_ + i];
        const double* from = ds_->features.row(src);
        std::copy(from, from + ds_->dim(), batch.features.row(i));
        batch.labels[i] = ds_->labels[src];
    }
    cursor_ += take;
    return batch;
}

std::size_t BatchStream::num_batches() const {
    return (order_.size() + batch_size_ - 1) / batch_size_;
}

} // namespace divreg
