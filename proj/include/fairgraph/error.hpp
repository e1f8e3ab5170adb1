#pragma once

#include <stdexcept>
#include <string>

namespace fairgraph {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class EmptyGraph : public Error { public: using Error::Error; };
class DegenerateClass : public Error { public: using Error::Error; };
class ParseError : public Error { public: using Error::Error; };
class MissingColumn : public Error { public: using Error::Error; };
class InfeasibleSpec : public Error { public: using Error::Error; };
class InvalidK : public Error { public: using Error::Error; };
class EmptyGroup : public Error { public: using Error::Error; };
class TooManyQuantiles : public Error { public: using Error::Error; };
class ConvergenceFailure : public Error { public: using Error::Error; };
class DimensionMismatch : public Error { public: using Error::Error; };
class NonFiniteLoss : public Error { public: using Error::Error; };
class SingleClass : public Error { public: using Error::Error; };
class NoPositives : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };

}  // namespace fairgraph
