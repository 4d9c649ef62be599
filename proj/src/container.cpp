#include <pwg/container.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pwg {

namespace fs = std::filesystem;

std::string to_string(DType t) { return t == DType::F32 ? "f32" : "f64"; }

std::size_t dtype_size(DType t) { return t == DType::F32 ? 4 : 8; }

std::uint64_t ArrayRecord::elements() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= static_cast<std::uint64_t>(d);
    return n;
}

std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_number(const std::string &s, const std::string &field) {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ValidationError(field, "not a number: '" + s + "'");
    return v;
}

std::int64_t parse_int(const std::string &s, const std::string &field) {
    std::int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ValidationError(field, "not an integer: '" + s + "'");
    return v;
}

std::string shape_string(const std::vector<std::int64_t> &shape) {
    std::string out;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(shape[i]);
    }
    return out;
}

static bool valid_token(const std::string &s) {
    if (s.empty()) return false;
    for (char c : s)
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') return false;
    return true;
}

void Manifest::set(const std::string &key, std::string value) {
    if (!valid_token(key)) throw ArgumentError("manifest key must be a non-empty token: '" + key + "'");
    if (value.find('\n') != std::string::npos) throw ArgumentError("manifest value contains newline");
    for (auto &[k, v] : meta)
        if (k == key) {
            v = std::move(value);
            return;
        }
    meta.emplace_back(key, std::move(value));
}

const std::string *Manifest::get(const std::string &key) const {
    for (auto &[k, v] : meta)
        if (k == key) return &v;
    return nullptr;
}

const std::string &Manifest::require(const std::string &key) const {
    if (auto *v = get(key)) return *v;
    throw ValidationError(key, "missing from manifest");
}

const ArrayRecord *Manifest::find(const std::string &name) const {
    for (auto &a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

std::string Manifest::serialize() const {
    std::ostringstream os;
    os << "pwg-container 1\n";
    os << "kind " << kind << "\n";
    for (auto &[k, v] : meta) os << "meta " << k << " " << v << "\n";
    for (auto &a : arrays)
        os << "array " << a.name << " " << to_string(a.dtype) << " " << shape_string(a.shape) << " "
           << a.file << " " << a.offset << "\n";
    return os.str();
}

Manifest Manifest::parse(const std::string &text, const std::string &origin) {
    Manifest m;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    bool header = false;
    auto fail = [&](const std::string &what) {
        throw IoError(origin, "line " + std::to_string(lineno) + ": " + what);
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (!header) {
            std::string version;
            ls >> version;
            if (tag != "pwg-container" || version != "1") fail("not a pwg container manifest");
            header = true;
        } else if (tag == "kind") {
            ls >> m.kind;
        } else if (tag == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value[0] == ' ') value.erase(0, 1);
            m.meta.emplace_back(key, value);
        } else if (tag == "array") {
            ArrayRecord rec;
            std::string dtype, shape;
            if (!(ls >> rec.name >> dtype >> shape >> rec.file >> rec.offset)) fail("malformed array record");
            if (dtype == "f32") rec.dtype = DType::F32;
            else if (dtype == "f64") rec.dtype = DType::F64;
            else fail("unknown element type '" + dtype + "'");
            std::istringstream ss(shape);
            std::string dim;
            while (std::getline(ss, dim, ',')) {
                auto d = parse_int(dim, rec.name);
                if (d < 0) fail("negative dimension in " + rec.name);
                rec.shape.push_back(d);
            }
            if (rec.file.find('/') != std::string::npos || rec.file.find("..") != std::string::npos)
                fail("array file must be a plain file name");
            m.arrays.push_back(std::move(rec));
        } else {
            fail("unknown record '" + tag + "'");
        }
    }
    if (!header) throw IoError(origin, "empty manifest");
    return m;
}

ContainerWriter::ContainerWriter(fs::path dir, std::string kind) : dir_(std::move(dir)) {
    manifest_.kind = std::move(kind);
}

template <typename T>
static void append_le(std::vector<unsigned char> &buf, const T *data, std::size_t count) {
    const std::size_t start = buf.size();
    buf.resize(start + count * sizeof(T));
    std::memcpy(buf.data() + start, data, count * sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < count; ++i)
            std::reverse(buf.begin() + start + i * sizeof(T), buf.begin() + start + (i + 1) * sizeof(T));
    }
}

void ContainerWriter::add_raw(const std::string &name, DType dtype, std::vector<std::int64_t> shape,
                              const void *data, std::size_t count, const std::string &file) {
    if (!valid_token(name)) throw ArgumentError("array name must be a non-empty token");
    if (manifest_.find(name)) throw ArgumentError("duplicate array '" + name + "'");
    ArrayRecord rec;
    rec.name = name;
    rec.dtype = dtype;
    rec.shape = std::move(shape);
    rec.file = file.empty() ? name + "." + to_string(dtype) : file;
    if (rec.elements() != count)
        throw ArgumentError("array '" + name + "': shape " + shape_string(rec.shape) + " does not match " +
                            std::to_string(count) + " elements");
    auto &buf = files_[rec.file];
    rec.offset = buf.size();
    if (dtype == DType::F32) append_le(buf, static_cast<const float *>(data), count);
    else append_le(buf, static_cast<const double *>(data), count);
    manifest_.arrays.push_back(std::move(rec));
}

void ContainerWriter::add(const std::string &name, std::vector<std::int64_t> shape, std::span<const float> data,
                          const std::string &file) {
    add_raw(name, DType::F32, std::move(shape), data.data(), data.size(), file);
}

void ContainerWriter::add(const std::string &name, std::vector<std::int64_t> shape,
                          std::span<const double> data, const std::string &file) {
    add_raw(name, DType::F64, std::move(shape), data.data(), data.size(), file);
}

void ContainerWriter::finish() {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError(dir_.string(), "cannot create directory: " + ec.message());
    for (auto &[file, bytes] : files_) {
        const auto path = dir_ / file;
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError(path.string(), "cannot open for writing");
        os.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw IoError(path.string(), "write failed");
    }
    const auto path = dir_ / kManifestName;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError(path.string(), "cannot open for writing");
    os << manifest_.serialize();
    if (!os) throw IoError(path.string(), "write failed");
}

ContainerReader::ContainerReader(fs::path dir) : dir_(std::move(dir)) {
    const auto path = dir_ / kManifestName;
    std::ifstream is(path);
    if (!is) throw IoError(path.string(), "manifest not found");
    std::stringstream ss;
    ss << is.rdbuf();
    manifest_ = Manifest::parse(ss.str(), path.string());
}

const ArrayRecord &ContainerReader::record(const std::string &name) const {
    if (auto *rec = manifest_.find(name)) return *rec;
    throw ValidationError(name, "missing from container " + dir_.string());
}

std::vector<unsigned char> ContainerReader::read_bytes(const ArrayRecord &rec) const {
    const auto path = dir_ / rec.file;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(path.string(), "cannot open array file");
    is.seekg(0, std::ios::end);
    const auto size = static_cast<std::uint64_t>(is.tellg());
    if (rec.offset + rec.bytes() > size)
        throw ValidationError(rec.name, "array extends past end of " + rec.file);
    std::vector<unsigned char> bytes(rec.bytes());
    is.seekg(static_cast<std::streamoff>(rec.offset));
    is.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!is) throw IoError(path.string(), "read failed");
    return bytes;
}

template <typename T>
static std::vector<T> decode_le(const std::vector<unsigned char> &bytes) {
    std::vector<T> out(bytes.size() / sizeof(T));
    std::memcpy(out.data(), bytes.data(), bytes.size());
    if constexpr (std::endian::native == std::endian::big) {
        for (auto &v : out) {
            auto *p = reinterpret_cast<unsigned char *>(&v);
            std::reverse(p, p + sizeof(T));
        }
    }
    return out;
}

static void check_shape(const ArrayRecord &rec, const std::vector<std::int64_t> &expected) {
    if (!expected.empty() && rec.shape != expected)
        throw ValidationError(rec.name, "shape (" + shape_string(rec.shape) + ") expected (" +
                                            shape_string(expected) + ")");
}

std::vector<float> ContainerReader::read_f32(const std::string &name,
                                             const std::vector<std::int64_t> &expected_shape) const {
    const auto &rec = record(name);
    check_shape(rec, expected_shape);
    if (rec.dtype != DType::F32) throw ValidationError(name, "expected f32 elements");
    return decode_le<float>(read_bytes(rec));
}

std::vector<double> ContainerReader::read_f64(const std::string &name,
                                              const std::vector<std::int64_t> &expected_shape) const {
    const auto &rec = record(name);
    check_shape(rec, expected_shape);
    if (rec.dtype != DType::F64) throw ValidationError(name, "expected f64 elements");
    return decode_le<double>(read_bytes(rec));
}

}  // namespace pwg
