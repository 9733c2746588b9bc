// Thin typed client for the grading API. Every non-2xx response carries the
// uniform {"error": {code, message}} envelope, surfaced as GradingApiError.

import { NextItem, SessionExport } from './types.js';

export class GradingApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseOrThrow<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    const err = (body as { error?: { code?: string; message?: string } }).error ?? {};
    throw new GradingApiError(resp.status, err.code ?? 'unknown', err.message ?? resp.statusText);
  }
  return body as T;
}

export class GradingClient {
  constructor(
    private readonly baseUrl: string,
    private readonly sessionId: string,
  ) {}

  private url(action: string): string {
    return `${this.baseUrl}/api/sessions/${this.sessionId}/${action}`;
  }

  async next(rater: number): Promise<NextItem> {
    const resp = await fetch(`${this.url('next')}?rater=${rater}`);
    return parseOrThrow<NextItem>(resp);
  }

  async submitScores(rater: number, item: string, dims: Record<string, number>): Promise<void> {
    const resp = await fetch(this.url('scores'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ rater, item, dims }),
    });
    await parseOrThrow(resp);
  }

  async submitPick(rater: number, slot: string, chosenId: string): Promise<void> {
    const resp = await fetch(this.url('picks'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ rater, slot, chosen_id: chosenId }),
    });
    await parseOrThrow(resp);
  }

  async close(): Promise<void> {
    const resp = await fetch(this.url('close'), { method: 'POST' });
    await parseOrThrow(resp);
  }

  async exportSession(): Promise<SessionExport> {
    const resp = await fetch(this.url('export'));
    return parseOrThrow<SessionExport>(resp);
  }
}

export async function createSession(
  baseUrl: string,
  body: unknown,
): Promise<GradingClient> {
  const resp = await fetch(`${baseUrl}/api/sessions`, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify(body),
  });
  const created = await parseOrThrow<{ session: string }>(resp);
  return new GradingClient(baseUrl, created.session);
}
