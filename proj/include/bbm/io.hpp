#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bbm/types.hpp"

namespace bbm {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "bbm-binary I/O assumes a little-endian host");

// On-disk dense matrix: magic "BBMP", u32 version, u64 rows, u64 cols, then
// rows*cols little-endian f64 values in row-major order.
inline constexpr std::uint32_t kBbmFormatVersion = 1;

inline void write_bbm_matrix(const fs::path& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open for writing: " + path.string());
    out.write("BBMP", 4);
    const std::uint32_t version = kBbmFormatVersion;
    const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!out) throw ValidationError("write failed: " + path.string());
}

inline Matrix read_bbm_matrix(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "BBMP", 4) != 0)
        throw ValidationError("malformed header (bad magic): " + path.string());
    std::uint32_t version = 0;
    std::uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    in.read(reinterpret_cast<char*>(&cols), sizeof cols);
    if (!in) throw ValidationError("malformed header (truncated): " + path.string());
    if (version != kBbmFormatVersion)
        throw ValidationError("unsupported bbm-binary version " + std::to_string(version) +
                              ": " + path.string());
    if (rows == 0 || cols == 0)
        throw DimensionMismatch("zero dimension in header: " + path.string());
    constexpr std::uintmax_t header_bytes = 24;
    const std::uintmax_t expected =
        header_bytes + static_cast<std::uintmax_t>(rows) * cols * sizeof(double);
    std::error_code ec;
    const std::uintmax_t actual = fs::file_size(path, ec);
    if (!ec && actual != expected)
        throw DimensionMismatch("payload is " + std::to_string(actual - header_bytes) +
                                " bytes, header implies " +
                                std::to_string(expected - header_bytes) + ": " + path.string());
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::vector<double> row(static_cast<std::size_t>(cols));
    for (std::uint64_t r = 0; r < rows; ++r) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(double)));
        if (!in)
            throw DimensionMismatch("payload shorter than header implies: " + path.string());
        for (std::uint64_t c = 0; c < cols; ++c) {
            const double x = row[static_cast<std::size_t>(c)];
            if (!std::isfinite(x))
                throw ValidationError("non-finite value at (" + std::to_string(r) + ", " +
                                      std::to_string(c) + "): " + path.string());
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x;
        }
    }
    return m;
}

namespace detail {

inline bool parse_double(const std::string& tok, double& out) {
    const char* b = tok.c_str();
    char* end = nullptr;
    out = std::strtod(b, &end);
    if (end == b) return false;
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    return *end == '\0';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> toks;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            toks.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    toks.push_back(cur);
    return toks;
}

}  // namespace detail

// CSV of reals; a leading header row (any non-numeric token) is skipped.
inline Matrix read_csv_matrix(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    bool header_checked = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto toks = detail::split_csv_line(line);
        std::vector<double> vals;
        vals.reserve(toks.size());
        bool ok = true;
        for (const auto& t : toks) {
            double x;
            if (!detail::parse_double(t, x)) {
                ok = false;
                break;
            }
            vals.push_back(x);
        }
        if (!ok) {
            if (!header_checked && rows.empty()) {
                header_checked = true;  // header row
                continue;
            }
            throw ValidationError("unparseable CSV row at line " + std::to_string(lineno) +
                                  ": " + path.string());
        }
        header_checked = true;
        if (!rows.empty() && vals.size() != rows.front().size())
            throw DimensionMismatch("row " + std::to_string(lineno) + " has " +
                                    std::to_string(vals.size()) + " columns, expected " +
                                    std::to_string(rows.front().size()) + ": " + path.string());
        for (std::size_t c = 0; c < vals.size(); ++c)
            if (!std::isfinite(vals[c]))
                throw ValidationError("non-finite value at (" + std::to_string(rows.size()) +
                                      ", " + std::to_string(c) + "): " + path.string());
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw ValidationError("empty CSV: " + path.string());
    Matrix m(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows.front().size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return m;
}

inline void write_csv_matrix(const fs::path& path, const Matrix& m,
                             const std::vector<std::string>& header = {}) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path.string());
    out.precision(17);
    if (!header.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i)
            out << (i ? "," : "") << header[i];
        out << "\n";
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
        out << "\n";
    }
}

// Single-column integer CSV of parcel labels (0 = unassigned).
inline IntVector read_label_csv(const fs::path& path) {
    const Matrix m = read_csv_matrix(path);
    if (m.cols() != 1)
        throw DimensionMismatch("parcellation CSV must have one column: " + path.string());
    IntVector labels(m.rows());
    for (Eigen::Index v = 0; v < m.rows(); ++v) {
        const double x = m(v, 0);
        const int l = static_cast<int>(std::lround(x));
        if (std::abs(x - l) > 1e-9)
            throw ValidationError("non-integer label at location " + std::to_string(v) + ": " +
                                  path.string());
        labels[v] = l;
    }
    return labels;
}

inline json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("bad JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

inline void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
}

enum class BoldFormat { BbmBinary, Csv };

inline BoldFormat bold_format_from_extension(const fs::path& path) {
    return path.extension() == ".csv" ? BoldFormat::Csv : BoldFormat::BbmBinary;
}

// Loads a data matrix plus the optional "<path>.json" sidecar carrying
// tr_seconds / subject_id / session_id. kept_mask comes back all-true.
inline BoldMatrix load_bold(const fs::path& path, BoldFormat format) {
    BoldMatrix b;
    b.data = (format == BoldFormat::Csv) ? read_csv_matrix(path) : read_bbm_matrix(path);
    b.reset_mask();
    b.subject_id = path.stem().string();
    b.session_id = "1";
    const fs::path sidecar = path.string() + ".json";
    if (fs::exists(sidecar)) {
        const json j = read_json_file(sidecar);
        if (j.contains("tr_seconds")) b.tr_seconds = j.at("tr_seconds").get<double>();
        if (j.contains("subject_id")) b.subject_id = j.at("subject_id").get<std::string>();
        if (j.contains("session_id")) b.session_id = j.at("session_id").get<std::string>();
    }
    b.validate();
    return b;
}

inline BoldMatrix load_bold(const fs::path& path) {
    return load_bold(path, bold_format_from_extension(path));
}

inline void save_bold(const fs::path& path, const BoldMatrix& b) {
    write_bbm_matrix(path, b.data);
    json sidecar = {{"tr_seconds", b.tr_seconds},
                    {"subject_id", b.subject_id},
                    {"session_id", b.session_id}};
    write_json_file(path.string() + ".json", sidecar);
}

// ContinuousMaps templates live in bbm-binary (Q x V); parcellations in a
// single-column label CSV. Names come from an optional "<path>.json" sidecar.
inline NetworkTemplate load_template(const fs::path& path, TemplateKind kind) {
    NetworkTemplate t;
    t.kind = kind;
    if (kind == TemplateKind::ContinuousMaps)
        t.maps = read_bbm_matrix(path);
    else
        t.labels = read_label_csv(path);
    const fs::path sidecar = path.string() + ".json";
    if (fs::exists(sidecar)) {
        const json j = read_json_file(sidecar);
        if (j.contains("network_names"))
            t.network_names = j.at("network_names").get<std::vector<std::string>>();
    }
    t.validate();
    return t;
}

// FNV-1a, used for config and output fingerprints in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64_file(const fs::path& path, std::uint64_t h = 0xcbf29ce484222325ULL) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open: " + path.string());
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    return h;
}

}  // namespace bbm
