#include "srd/cases.hpp"

#include <cctype>

namespace srd {

CaseNameError::CaseNameError(const std::string& msg, std::size_t position)
    : std::invalid_argument(msg + " at position " + std::to_string(position)), position_(position) {}

namespace {

class Scanner {
public:
    explicit Scanner(const std::string& s) : s_(s) {}

    bool done() const { return pos_ == s_.size(); }
    std::size_t pos() const { return pos_; }

    bool accept(const char* lit) {
        std::size_t n = 0;
        while (lit[n]) {
            if (pos_ + n >= s_.size() || s_[pos_ + n] != lit[n]) return false;
            ++n;
        }
        pos_ += n;
        return true;
    }

    void expect(const char* lit) {
        if (!accept(lit)) throw CaseNameError(std::string("expected '") + lit + "'", pos_);
    }

    int integer() {
        const std::size_t start = pos_;
        long v = 0;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
            v = v * 10 + (s_[pos_] - '0');
            if (v > 1000000000) throw CaseNameError("integer too large", start);
            ++pos_;
        }
        if (pos_ == start) throw CaseNameError("expected an integer", start);
        return static_cast<int>(v);
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;
};

}  // namespace

CaseId parse_case_name(const std::string& name) {
    Scanner sc(name);
    CaseId id;
    if (sc.accept("SRD")) {
        id.S = id.R = id.D = sc.integer();
    } else {
        sc.expect("S");
        id.S = sc.integer();
        id.R = id.S;
        bool have_d = false;
        if (sc.accept("-RD")) {
            id.R = sc.integer();
            id.D = id.R;
            have_d = true;
        } else if (sc.accept("-R")) {
            id.R = sc.integer();
        }
        if (!have_d && sc.accept("-D")) {
            id.D = sc.integer();
            have_d = true;
        }
        if (!have_d) id.D = id.R;
    }
    if (sc.accept("adap")) id.adap = sc.integer();
    if (!sc.done()) throw CaseNameError("unexpected trailing characters", sc.pos());
    if (id.S <= 0 || id.R <= 0 || id.D <= 0) throw CaseNameError("S, R and D must be positive", 0);
    return id;
}

std::string format_case_name(const CaseId& id) {
    std::string s;
    if (id.S == id.R && id.R == id.D) s = "SRD" + std::to_string(id.S);
    else if (id.R == id.D) s = "S" + std::to_string(id.S) + "-RD" + std::to_string(id.R);
    else if (id.R == id.S) s = "S" + std::to_string(id.S) + "-D" + std::to_string(id.D);
    else s = "S" + std::to_string(id.S) + "-R" + std::to_string(id.R) + "-D" + std::to_string(id.D);
    if (id.adap > 0) s += "adap" + std::to_string(id.adap);
    return s;
}

}  // namespace srd
