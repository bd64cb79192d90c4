pub mod annotate;
pub mod bootstrap;
pub mod coref;
pub mod corpus;
pub mod forecast;
pub mod hashing;
pub mod kgraph;
pub mod lexicon;
pub mod text;
pub mod triples;
