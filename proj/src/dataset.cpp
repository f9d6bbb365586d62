#include "stlink/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "stlink/errors.hpp"

namespace stlink {

namespace {

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

// Splits into exactly four comma-separated fields.
bool split4(std::string_view line, std::string_view (&fields)[4]) {
    for (int k = 0; k < 4; ++k) {
        const auto comma = line.find(',');
        if (k < 3) {
            if (comma == std::string_view::npos) return false;
            fields[k] = trim(line.substr(0, comma));
            line.remove_prefix(comma + 1);
        } else {
            if (comma != std::string_view::npos) return false;
            fields[k] = trim(line);
        }
    }
    return true;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

bool parse_record(std::string_view line, Record& out) {
    std::string_view f[4];
    if (!split4(trim(line), f)) return false;
    Record r;
    r.entity = std::string(f[0]);
    if (!parse_number(f[1], r.t) || !parse_number(f[2], r.loc.lat) ||
        !parse_number(f[3], r.loc.lon)) {
        return false;
    }
    if (!r.valid()) return false;
    out = std::move(r);
    return true;
}

IngestResult ingest(std::istream& in) {
    IngestResult res;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        const std::string_view view = trim(line);
        if (view.empty()) continue;
        if (first) {
            first = false;
            if (view.size() >= 3 && static_cast<unsigned char>(view[0]) == 0xEF) {
                // UTF-8 byte order mark
                line.erase(0, 3);
            }
            std::string_view f[4];
            std::int64_t t = 0;
            if (split4(trim(line), f) && !parse_number(f[1], t)) {
                res.header = true;
                continue;
            }
        }
        ++res.lines;
        Record r;
        if (parse_record(line, r)) {
            res.records.push_back(std::move(r));
        } else {
            ++res.malformed;
        }
    }
    if (res.lines > 0 &&
        static_cast<double>(res.malformed) > kMaxMalformedShare * static_cast<double>(res.lines)) {
        throw FormatError("too many malformed lines: " + std::to_string(res.malformed) + " of " +
                          std::to_string(res.lines));
    }
    return res;
}

IngestResult ingest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    return ingest(in);
}

void write_records(std::ostream& out, std::span<const Record> records) {
    out << "entity_id,timestamp_epoch_s,lat,lon\n";
    char buf[96];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, ",%lld,%.7f,%.7f\n", static_cast<long long>(r.t), r.loc.lat,
                      r.loc.lon);
        out << r.entity << buf;
    }
}

void write_records(const std::filesystem::path& path, std::span<const Record> records) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    write_records(out, records);
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

std::vector<Record> drop_sparse_entities(std::span<const Record> records, std::size_t min_records,
                                         std::size_t* dropped_entities) {
    std::map<std::string_view, std::size_t> counts;
    for (const auto& r : records) ++counts[r.entity];
    std::vector<Record> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        if (counts[r.entity] > min_records) out.push_back(r);
    }
    if (dropped_entities) {
        *dropped_entities = 0;
        for (const auto& [id, n] : counts) {
            if (n <= min_records) ++*dropped_entities;
        }
    }
    return out;
}

}  // namespace stlink
