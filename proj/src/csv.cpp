#include "fairfed/csv.hpp"

namespace fairfed::csv {

bool read_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    int c = in.get();
    if (c == std::char_traits<char>::eof()) return false;

    std::string field;
    bool quoted = false;
    bool field_started = false;
    for (; c != std::char_traits<char>::eof(); c = in.get()) {
        const char ch = static_cast<char>(c);
        if (quoted) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        if (ch == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
            field_started = false;
        } else if (ch == '\n') {
            break;
        } else if (ch == '\r') {
            if (in.peek() == '\n') in.get();
            break;
        } else {
            field.push_back(ch);
            field_started = true;
        }
    }
    fields.push_back(std::move(field));
    return true;
}

std::string escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

}  // namespace fairfed::csv
