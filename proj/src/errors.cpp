#include "smoothfit/errors.hpp"

#include <sstream>

namespace smoothfit {
namespace {

std::string join(const std::vector<std::string>& problems) {
    std::string out = "invalid input: ";
    for (std::size_t i = 0; i < problems.size(); ++i) {
        if (i) out += "; ";
        out += problems[i];
    }
    return out;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> problems)
    : Error(join(problems)), problems_(std::move(problems)) {}

std::vector<std::string> MultipleRootsError::details() const {
    std::vector<std::string> out;
    for (const auto& [a, b] : roots_) {
        std::ostringstream os;
        os.precision(10);
        os << "a=" << a << " b=" << b;
        out.push_back(os.str());
    }
    return out;
}

void rethrow_with_context(const std::exception_ptr& error, const std::string& context) {
    const std::string p = context + ": ";
    try {
        std::rethrow_exception(error);
    } catch (const ValidationError& e) {
        std::vector<std::string> problems;
        for (const auto& s : e.problems()) problems.push_back(p + s);
        throw ValidationError(problems);
    } catch (const MultipleRootsError& e) {
        throw MultipleRootsError(p + e.what(), e.roots());
    } catch (const ParseError&) {
        throw;
    } catch (const RangeError& e) {
        throw RangeError(p + e.what());
    } catch (const NoSolutionError& e) {
        throw NoSolutionError(p + e.what());
    } catch (const SingularityError& e) {
        throw SingularityError(p + e.what());
    } catch (const DivergenceError& e) {
        throw DivergenceError(p + e.what());
    } catch (const InsufficientDataError& e) {
        throw InsufficientDataError(p + e.what());
    } catch (const QualityError& e) {
        throw QualityError(p + e.what());
    } catch (const Error& e) {
        throw Error(p + e.what());
    }
}

}  // namespace smoothfit
