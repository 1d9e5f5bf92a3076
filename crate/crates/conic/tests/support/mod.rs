pub mod dense_barrier;
