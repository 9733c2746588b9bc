// Payload types for the grading API (mirrors the server's JSON shapes).

export interface ParagraphPayload {
  index: number;
  text: string;
}

export interface SlotPayload {
  paragraph_index: number;
  caption: string;
  candidates: string[];
  selected: string | null;
}

export interface ArticlePayload {
  instruction: string;
  paragraphs: ParagraphPayload[];
  slots: SlotPayload[];
}

export interface ScoreItem {
  kind: 'score';
  item: string;
  method_token: string;
  instruction: string;
  article: ArticlePayload;
  image_uris: Record<string, string>;
  dimensions: DimensionSpec[];
}

export interface PickCandidate {
  id: string;
  uri: string;
}

export interface PickItem {
  kind: 'pick';
  item: string;
  slot: string;
  paragraph_index: number;
  prefix: ParagraphPayload[];
  candidates: PickCandidate[];
}

export interface DoneItem {
  done: true;
}

export type NextItem = ScoreItem | PickItem | DoneItem;

export interface DimensionSpec {
  key: string;
  name: string;
  explanation: string;
  levels: Record<'1' | '3' | '5', string>;
}

export interface SessionExport {
  session: string;
  csv: string;
  agreement: Record<string, number>;
  blinding: Record<string, string>;
}

export interface ApiError {
  error: { code: string; message: string };
}

export const SCORE_LEVELS = [1, 3, 5] as const;
export type ScoreLevel = (typeof SCORE_LEVELS)[number];

export const DIM_KEYS = ['d1', 'd2', 'd3', 'd4', 'd5', 'd6', 'd7', 'd8'] as const;
export type DimKey = (typeof DIM_KEYS)[number];
