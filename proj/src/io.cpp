#include "nphawkes/io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace nphawkes {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& cell, std::size_t line_no) {
    double v = 0.0;
    const char* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc() || ptr != end || cell.empty()) {
        throw IoError("line " + std::to_string(line_no) + ": '" + cell + "' is not a number");
    }
    return v;
}

}  // namespace

std::vector<Point3> parse_events_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    std::vector<Point3> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        const auto cells = split(line);
        if (!header) {
            if (cells != std::vector<std::string>{"t", "x", "y"}) {
                throw IoError("events CSV must start with the header t,x,y");
            }
            header = true;
            continue;
        }
        if (cells.size() != 3) throw IoError("line " + std::to_string(line_no) + ": expected 3 columns");
        out.push_back({parse_number(cells[0], line_no), parse_number(cells[1], line_no),
                       parse_number(cells[2], line_no)});
    }
    if (!header) throw IoError("events CSV is empty");
    return out;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<Point3> read_events_csv(const std::filesystem::path& path) {
    try {
        return parse_events_csv(read_text(path));
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc()) throw IoError("cannot format number");
    return std::string(buf.data(), ptr);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size()) throw IoError("CSV row has the wrong number of columns");
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

void write_events_csv(const std::filesystem::path& path, const std::vector<Point3>& events) {
    std::vector<std::vector<double>> rows;
    rows.reserve(events.size());
    for (const auto& e : events) rows.push_back({e.t, e.x, e.y});
    write_csv(path, {"t", "x", "y"}, rows);
}

nlohmann::json read_json(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace nphawkes
