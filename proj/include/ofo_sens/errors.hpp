// Copyright 2026 The ofo-sens Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef OFO_SENS_ERRORS_HPP_
#define OFO_SENS_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace ofo_sens {

/// Base class of every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// The projection QP has no feasible point.
class Infeasible : public Error
{
public:
  using Error::Error;
};

/// Ill-conditioned linear algebra inside a solver.
class NumericalFailure : public Error
{
public:
  using Error::Error;
};

/// The linearized KKT system is singular at the given point.
class DegenerateKkt : public Error
{
public:
  using Error::Error;
};

class DimensionMismatch : public Error
{
public:
  using Error::Error;
};

/// A mismatch matrix has nonzeros outside the plant's pattern.
class SparsityViolation : public Error
{
public:
  using Error::Error;
};

class MissingSecondDerivatives : public Error
{
public:
  using Error::Error;
};

/// A finite-difference probe left the valid parameter domain.
class PerturbationInvalid : public Error
{
public:
  using Error::Error;
};

class ShapeMismatch : public Error
{
public:
  using Error::Error;
};

/// Invalid or unreadable experiment configuration.
class ConfigError : public Error
{
public:
  using Error::Error;
};

/// An OFO step failed; carries the timestep index at which it happened.
class StepError : public Error
{
public:
  StepError(int step, const std::string & what)
      : Error("timestep " + std::to_string(step) + ": " + what), step_(step)
  {}

  int step() const noexcept { return step_; }

private:
  int step_;
};

}  // namespace ofo_sens

#endif  // OFO_SENS_ERRORS_HPP_
