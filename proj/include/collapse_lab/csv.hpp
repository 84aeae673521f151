#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace clab::csv {

// Shortest decimal that round-trips to the same double; "nan", "inf" and
// "-inf" for non-finite values.
std::string format_double(double v);

std::string escape(std::string_view field);

class Writer {
  public:
    explicit Writer(std::ostream& out) : out_(out) {}
    void row(const std::vector<std::string>& fields);

  private:
    std::ostream& out_;
};

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a named column; throws InvalidInput when absent.
    std::size_t column(const std::string& name) const;
    bool has_column(const std::string& name) const;
};

// RFC 4180 parser: quoted fields, doubled quotes, CRLF or LF line ends.
Table parse(std::string_view content);
Table read_file(const std::string& path);

double to_double(const std::string& field, const std::string& context);

} // namespace clab::csv
