#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <string>

namespace hydrodeep {

/// Calendar day, stored as days since the civil epoch. Parsing and
/// formatting use the ISO `YYYY-MM-DD` form.
class Date {
public:
    Date() = default;
    explicit Date(std::chrono::sys_days d) : days_(d) {}
    Date(int year, unsigned month, unsigned day);

    static Date parse(const std::string& text);  // throws on malformed/invalid dates

    std::string to_string() const;

    Date plus_days(std::int64_t n) const {
        return Date(days_ + std::chrono::days(n));
    }

    /// Signed day count from `other` to this date.
    std::int64_t days_since(const Date& other) const {
        return (days_ - other.days_).count();
    }

    std::chrono::sys_days raw() const { return days_; }

    auto operator<=>(const Date&) const = default;

private:
    std::chrono::sys_days days_{};
};

}  // namespace hydrodeep
