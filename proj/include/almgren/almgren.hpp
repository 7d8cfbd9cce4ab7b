#pragma once

#include "almgren/error.hpp"
#include "almgren/quadrature.hpp"
#include "almgren/radial.hpp"
#include "almgren/spherical_harmonics.hpp"
#include "almgren/angular.hpp"
#include "almgren/potential.hpp"
#include "almgren/angular_spectrum.hpp"
#include "almgren/modal_field.hpp"
#include "almgren/frequency.hpp"
#include "almgren/asymptotics.hpp"
#include "almgren/inequalities.hpp"
#include "almgren/scenario.hpp"
