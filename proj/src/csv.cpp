#include "squeezelab/csv.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "squeezelab/constants.hpp"

namespace squeezelab {

std::string format_number(double value)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(std::ostream& out, std::initializer_list<std::string_view> header)
    : out_(out), columns_(header.size())
{
    bool first = true;
    for (auto name : header) {
        if (!first) out_ << ',';
        out_ << name;
        first = false;
    }
    out_ << '\n';
}

CsvWriter& CsvWriter::cell(double value)
{
    return cell(std::string_view(format_number(value)));
}

CsvWriter& CsvWriter::cell(long long value)
{
    return cell(std::string_view(std::to_string(value)));
}

CsvWriter& CsvWriter::cell(unsigned long long value)
{
    return cell(std::string_view(std::to_string(value)));
}

CsvWriter& CsvWriter::cell(std::string_view text)
{
    if (filled_ > 0) out_ << ',';
    if (text.find_first_of(",\"\n") == std::string_view::npos) {
        out_ << text;
    } else {
        out_ << '"';
        for (char ch : text) {
            if (ch == '"') out_ << '"';
            out_ << ch;
        }
        out_ << '"';
    }
    ++filled_;
    return *this;
}

void CsvWriter::end_row()
{
    if (filled_ != columns_) {
        throw DomainError("CSV row has " + std::to_string(filled_) + " cells, expected "
                          + std::to_string(columns_));
    }
    out_ << '\n';
    filled_ = 0;
}

std::size_t CsvTable::column(std::string_view name) const
{
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw DomainError("CSV column not found: " + std::string(name));
}

namespace {

std::string trimmed(const std::string& field)
{
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : field.substr(b, e - b + 1);
}

// Splits on commas outside double quotes; "" inside quotes is a literal quote.
// A trailing comma yields a trailing empty field.
std::vector<std::string> split_fields(const std::string& line)
{
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                field += ch;
            }
        } else if (ch == '"') {
            quoted = true;
            was_quoted = true;
            field.clear();
        } else if (ch == ',') {
            fields.push_back(was_quoted ? field : trimmed(field));
            field.clear();
            was_quoted = false;
        } else if (!was_quoted) {
            field += ch;
        }
    }
    if (quoted) throw DomainError("CSV line has an unterminated quote");
    fields.push_back(was_quoted ? field : trimmed(field));
    return fields;
}

}  // namespace

CsvTable read_csv(std::istream& in)
{
    CsvTable table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        if (table.header.empty()) {
            table.header = split_fields(line);
            continue;
        }
        auto fields = split_fields(line);
        if (fields.size() != table.header.size()) {
            throw DomainError("CSV row width does not match header");
        }
        table.rows.push_back(std::move(fields));
    }
    if (table.header.empty()) throw DomainError("CSV input has no header row");
    return table;
}

}  // namespace squeezelab
