#![allow(dead_code)]
pub mod alg1;
pub mod bigfloat;
pub mod clouds;
pub mod pq_brute;
pub mod scalar_model;
