#pragma once

// Minimal RFC-4180 reader/writer: quoted fields, doubled quotes, embedded
// separators and line breaks, CRLF or LF record terminators.

#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace sevnet::csv {

using Record = std::vector<std::string>;

class Reader {
public:
    explicit Reader(std::istream& in, char sep = ',') : in_(in), sep_(sep) {}

    /// Next record, or nullopt at end of input. Blank lines are skipped.
    std::optional<Record> next() {
        Record record;
        std::string field;
        bool in_quotes = false;
        bool any = false;
        bool field_was_quoted = false;
        int ch = 0;
        while ((ch = in_.get()) != std::char_traits<char>::eof()) {
            const char c = static_cast<char>(ch);
            any = true;
            if (in_quotes) {
                if (c == '"') {
                    if (in_.peek() == '"') {
                        field.push_back('"');
                        in_.get();
                    } else {
                        in_quotes = false;
                    }
                } else {
                    field.push_back(c);
                }
                continue;
            }
            if (c == '"' && field.empty() && !field_was_quoted) {
                in_quotes = true;
                field_was_quoted = true;
            } else if (c == sep_) {
                record.push_back(std::move(field));
                field.clear();
                field_was_quoted = false;
            } else if (c == '\n' || c == '\r') {
                if (c == '\r' && in_.peek() == '\n') in_.get();
                if (record.empty() && field.empty() && !field_was_quoted) {
                    any = false;
                    continue; // blank line
                }
                record.push_back(std::move(field));
                return record;
            } else {
                field.push_back(c);
            }
        }
        if (!any) return std::nullopt;
        record.push_back(std::move(field));
        return record;
    }

private:
    std::istream& in_;
    char sep_;
};

inline std::string quote(std::string_view field, char sep = ',') {
    const bool needs = field.find_first_of(std::string{sep} + "\"\r\n") != std::string_view::npos;
    if (!needs) return std::string{field};
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline void write_record(std::ostream& out, const Record& record, char sep = ',') {
    for (std::size_t i = 0; i < record.size(); ++i) {
        if (i) out << sep;
        out << quote(record[i], sep);
    }
    out << '\n';
}

} // namespace sevnet::csv
