#pragma once

#include "nphawkes/geometry.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace nphawkes {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads a `t,x,y` CSV with a header row.
std::vector<Point3> read_events_csv(const std::filesystem::path& path);
std::vector<Point3> parse_events_csv(const std::string& text);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Writes a CSV with the given header; every row must have one value per column.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
void write_events_csv(const std::filesystem::path& path, const std::vector<Point3>& events);

nlohmann::json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
std::string read_text(const std::filesystem::path& path);

}  // namespace nphawkes
