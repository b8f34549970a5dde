#pragma once

#include <initializer_list>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace squeezelab {

/// Shortest round-trip decimal representation ('.' separator, locale-free).
[[nodiscard]] std::string format_number(double value);

/// Comma-separated writer with a fixed header row.
class CsvWriter {
public:
    CsvWriter(std::ostream& out, std::initializer_list<std::string_view> header);

    CsvWriter& cell(double value);
    CsvWriter& cell(long long value);
    CsvWriter& cell(unsigned long long value);
    CsvWriter& cell(std::string_view text);
    void end_row();

private:
    std::ostream& out_;
    std::size_t columns_;
    std::size_t filled_ = 0;
};

/// Parsed CSV table: header names and rows of raw fields.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws DomainError if absent.
    [[nodiscard]] std::size_t column(std::string_view name) const;
};

[[nodiscard]] CsvTable read_csv(std::istream& in);

}  // namespace squeezelab
