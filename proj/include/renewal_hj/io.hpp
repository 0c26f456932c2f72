#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "renewal_hj/errors.hpp"

namespace renewal_hj {

using Json = nlohmann::ordered_json;

inline constexpr const char* kFormatTag = "renewal-hj-run/1";

/// Fifteen significant digits, so reruns print identical bytes.
inline std::string fmt_num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}

/// Tag used in file names, e.g. 0.05 -> "0.05".
inline std::string eps_tag(double eps) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", eps);
    return buf;
}

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    CsvTable& row() {
        rows_.emplace_back();
        return *this;
    }
    CsvTable& operator<<(double v) { return cell(fmt_num(v)); }
    CsvTable& operator<<(const std::string& s) { return cell(s); }
    CsvTable& operator<<(const char* s) { return cell(s); }
    CsvTable& operator<<(std::size_t v) { return cell(std::to_string(v)); }
    CsvTable& operator<<(int v) { return cell(std::to_string(v)); }

    std::string str() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < header_.size(); ++i) os << (i ? "," : "") << header_[i];
        os << '\n';
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
            os << '\n';
        }
        return os.str();
    }
    std::size_t size() const noexcept { return rows_.size(); }

private:
    CsvTable& cell(std::string s) {
        if (rows_.empty()) rows_.emplace_back();
        rows_.back().push_back(std::move(s));
        return *this;
    }
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

/// Output directory that remembers what it wrote. Without a root nothing
/// touches the disk, but the CSV texts are still kept for comparison.
class RunDirectory {
public:
    RunDirectory() = default;
    explicit RunDirectory(std::filesystem::path root) : root_(std::move(root)) {
        std::error_code ec;
        std::filesystem::create_directories(root_, ec);
        if (ec) fail(ErrorKind::IoError, "cannot create " + root_.string() + ": " + ec.message());
    }

    bool enabled() const noexcept { return !root_.empty(); }
    const std::filesystem::path& root() const noexcept { return root_; }
    const std::vector<std::string>& files() const noexcept { return files_; }
    const std::map<std::string, std::string>& csv_texts() const noexcept { return csv_; }

    void write_text(const std::string& name, const std::string& text) {
        if (name.size() > 4 && name.ends_with(".csv")) csv_[name] = text;
        if (!enabled()) {
            files_.push_back(name);
            return;
        }
        const auto path = root_ / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) fail(ErrorKind::IoError, "cannot write " + path.string());
        f << text;
        if (!f) fail(ErrorKind::IoError, "write failed for " + path.string());
        files_.push_back(name);
    }
    void write_csv(const std::string& name, const CsvTable& t) { write_text(name, t.str()); }
    void write_json(const std::string& name, const Json& j) { write_text(name, j.dump(2) + "\n"); }

    /// manifest.json: format tag and every file with its size.
    void write_manifest(const std::string& scenario) {
        if (!enabled()) return;
        Json m;
        m["format"] = kFormatTag;
        m["scenario"] = scenario;
        Json list = Json::array();
        for (const auto& name : files_) {
            list.push_back({{"file", name}, {"bytes", std::filesystem::file_size(root_ / name)}});
        }
        m["files"] = list;
        write_json("manifest.json", m);
    }

private:
    std::filesystem::path root_;
    std::vector<std::string> files_;
    std::map<std::string, std::string> csv_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) fail(ErrorKind::IoError, "cannot read " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

/// Numeric CSV with a header row; non-numeric cells read as NaN.
struct CsvData {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        fail(ErrorKind::ConfigError, "CSV has no column '" + name + "'");
    }
};

inline CsvData read_csv(const std::filesystem::path& p) {
    std::istringstream in(read_file(p));
    CsvData d;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        return out;
    };
    if (!std::getline(in, line)) fail(ErrorKind::IoError, p.string() + " is empty");
    d.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> r;
        for (const auto& c : split(line)) {
            char* end = nullptr;
            const double v = std::strtod(c.c_str(), &end);
            r.push_back(end && *end == '\0' && !c.empty() ? v : std::numeric_limits<double>::quiet_NaN());
        }
        d.rows.push_back(std::move(r));
    }
    return d;
}

}  // namespace renewal_hj
