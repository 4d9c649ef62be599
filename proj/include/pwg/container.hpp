#pragma once

// Directory container: a text manifest (`manifest.txt`) plus raw little-endian arrays.
// Shots and checkpoints both use it.
//
//   pwg-container 1
//   kind shot
//   meta <key> <value...>
//   array <name> <f32|f64> <d0,d1,...> <file> <byte offset>

#include <pwg/error.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace pwg {

inline constexpr const char *kManifestName = "manifest.txt";

enum class DType { F32, F64 };

std::string to_string(DType t);
std::size_t dtype_size(DType t);

struct ArrayRecord {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::int64_t> shape;
    std::string file;
    std::uint64_t offset = 0;

    std::uint64_t elements() const;
    std::uint64_t bytes() const { return elements() * dtype_size(dtype); }
};

class Manifest {
  public:
    std::string kind;
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<ArrayRecord> arrays;

    void set(const std::string &key, std::string value);
    const std::string *get(const std::string &key) const;
    // Throws ValidationError naming `key` when absent.
    const std::string &require(const std::string &key) const;
    const ArrayRecord *find(const std::string &name) const;

    std::string serialize() const;
    static Manifest parse(const std::string &text, const std::string &origin);
};

class ContainerWriter {
  public:
    ContainerWriter(std::filesystem::path dir, std::string kind);

    void meta(const std::string &key, std::string value) { manifest_.set(key, std::move(value)); }
    void add(const std::string &name, std::vector<std::int64_t> shape, std::span<const float> data,
             const std::string &file = {});
    void add(const std::string &name, std::vector<std::int64_t> shape, std::span<const double> data,
             const std::string &file = {});

    // Writes every array file, then the manifest.
    void finish();

  private:
    void add_raw(const std::string &name, DType dtype, std::vector<std::int64_t> shape,
                 const void *data, std::size_t count, const std::string &file);

    std::filesystem::path dir_;
    Manifest manifest_;
    std::map<std::string, std::vector<unsigned char>> files_;
};

class ContainerReader {
  public:
    explicit ContainerReader(std::filesystem::path dir);

    const Manifest &manifest() const { return manifest_; }
    const std::filesystem::path &dir() const { return dir_; }
    bool has(const std::string &name) const { return manifest_.find(name) != nullptr; }

    // Reads an array; when `expected_shape` is non-empty the recorded shape must match.
    std::vector<float> read_f32(const std::string &name,
                                const std::vector<std::int64_t> &expected_shape = {}) const;
    std::vector<double> read_f64(const std::string &name,
                                 const std::vector<std::int64_t> &expected_shape = {}) const;
    const ArrayRecord &record(const std::string &name) const;

  private:
    std::vector<unsigned char> read_bytes(const ArrayRecord &rec) const;

    std::filesystem::path dir_;
    Manifest manifest_;
};

std::string format_number(double v);
double parse_number(const std::string &s, const std::string &field);
std::int64_t parse_int(const std::string &s, const std::string &field);
std::string shape_string(const std::vector<std::int64_t> &shape);

}  // namespace pwg
