//! Holds the `acceptance` test target, which reruns the reference experiments at full size.
