pub mod fixed_point;
pub mod population_sweep;
pub mod prop_sweep;
pub mod real;
pub mod tau;
pub mod theorem3;
