/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const cca_fade: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
export const dropout_scatter: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
export const twomoon: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
