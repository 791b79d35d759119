#pragma once

#include <stdexcept>
#include <string>

namespace mpsim
{
    // A runtime invariant of the protocol engine does not hold. Scenario runs
    // map this to exit status 2.
    class InvariantBreach : public std::logic_error
    {
    public:
        using std::logic_error::logic_error;
    };

    class MalformedSegment : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    class ConfigError : public std::runtime_error
    {
    public:
        ConfigError(int line, std::string key, const std::string &what)
            : std::runtime_error(format(line, key, what)), line_(line), key_(std::move(key))
        {
        }

        int line() const noexcept { return line_; }
        const std::string &key() const noexcept { return key_; }

    private:
        static std::string format(int line, const std::string &key, const std::string &what)
        {
            std::string out;
            if (line > 0)
            {
                out += "line " + std::to_string(line) + ": ";
            }
            if (!key.empty())
            {
                out += key + ": ";
            }
            return out + what;
        }

        int line_;
        std::string key_;
    };

    inline void ensure(bool condition, const char *what)
    {
        if (!condition)
        {
            throw InvariantBreach(what);
        }
    }

} // namespace mpsim
