#include "collapse_lab/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "collapse_lab/errors.hpp"

namespace clab::csv {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void Writer::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        out_ << escape(fields[i]);
    }
    out_ << '\n';
}

std::size_t Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw InvalidInput("missing CSV column '" + name + "'");
}

bool Table::has_column(const std::string& name) const {
    for (const auto& h : header)
        if (h == name) return true;
    return false;
}

Table parse(std::string_view content) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> rec;
    std::string field;
    bool in_quotes = false, field_started = false;
    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && field.empty()) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            rec.push_back(std::move(field));
            field.clear();
            field_started = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
            if (field_started || !field.empty() || !rec.empty()) {
                rec.push_back(std::move(field));
                records.push_back(std::move(rec));
            }
            rec.clear();
            field.clear();
            field_started = false;
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) throw InvalidInput("CSV: unterminated quoted field");
    if (field_started || !field.empty() || !rec.empty()) {
        rec.push_back(std::move(field));
        records.push_back(std::move(rec));
    }
    Table t;
    if (records.empty()) return t;
    t.header = std::move(records.front());
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].size() != t.header.size())
            throw InvalidInput("CSV: row " + std::to_string(i) + " has " + std::to_string(records[i].size()) +
                               " fields, header has " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(records[i]));
    }
    return t;
}

Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open CSV file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

double to_double(const std::string& field, const std::string& context) {
    double v = 0.0;
    const char* b = field.data();
    const char* e = b + field.size();
    while (b < e && *b == ' ') ++b;
    if (b < e && *b == '+') ++b;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) throw InvalidInput(context + ": '" + field + "' is not a number");
    return v;
}

} // namespace clab::csv
