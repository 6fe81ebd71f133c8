#include "cirgest/labels.hpp"

#include <algorithm>
#include <cctype>

#include "cirgest/error.hpp"

namespace cirgest {

namespace {

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

}  // namespace

std::string_view to_string(Category c) {
    switch (c) {
        case Category::digits: return "digits";
        case Category::letters: return "letters";
        case Category::shapes: return "shapes";
    }
    return "unknown";
}

Category parse_category(std::string_view name) {
    for (auto c : kCategories) {
        if (iequals(name, to_string(c))) return c;
    }
    fail(ErrorCode::argument, "unknown category '" + std::string(name) + "'");
}

const std::vector<std::string>& labels_of(Category c) {
    static const std::vector<std::string> digits = {"1", "2", "3", "4", "5"};
    static const std::vector<std::string> letters = {"A", "B", "C", "D", "E"};
    static const std::vector<std::string> shapes = {"circle", "diamond", "triangle", "check",
                                                    "cross"};
    switch (c) {
        case Category::digits: return digits;
        case Category::letters: return letters;
        case Category::shapes: return shapes;
    }
    return shapes;
}

const std::vector<std::string>& all_labels() {
    static const std::vector<std::string> all = [] {
        std::vector<std::string> v;
        for (auto c : {Category::digits, Category::letters, Category::shapes}) {
            const auto& l = labels_of(c);
            v.insert(v.end(), l.begin(), l.end());
        }
        return v;
    }();
    return all;
}

std::optional<Category> category_of(std::string_view label) {
    for (auto c : kCategories) {
        for (const auto& l : labels_of(c)) {
            if (l == label) return c;
        }
    }
    return std::nullopt;
}

std::optional<std::string> canonical_label(std::string_view label) {
    for (const auto& l : all_labels()) {
        if (iequals(l, label)) return l;
    }
    return std::nullopt;
}

}  // namespace cirgest
