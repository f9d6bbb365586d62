#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stlink/history.hpp"

namespace stlink {

struct IngestResult {
    std::vector<Record> records;
    std::size_t lines = 0;      // data lines seen, header and blank lines excluded
    std::size_t malformed = 0;  // skipped data lines
    bool header = false;
};

/// Share of malformed data lines above which a file is rejected.
inline constexpr double kMaxMalformedShare = 0.10;

/// Parses `entity_id,timestamp_epoch_s,lat,lon` lines. A first line whose
/// timestamp field is not an integer is taken as a header.
IngestResult ingest(std::istream& in);
IngestResult ingest(const std::filesystem::path& path);

/// Parses one data line; false when malformed.
bool parse_record(std::string_view line, Record& out);

void write_records(std::ostream& out, std::span<const Record> records);
void write_records(const std::filesystem::path& path, std::span<const Record> records);

/// Keeps records of entities with more than `min_records` records.
std::vector<Record> drop_sparse_entities(std::span<const Record> records, std::size_t min_records,
                                         std::size_t* dropped_entities = nullptr);

}  // namespace stlink
